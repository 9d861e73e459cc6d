use nalgebra::{DMatrix, SymmetricEigen};

use super::matrix::gemm;
use super::Matrix;
use crate::error::{Error, Result};

/// Top principal directions of a point cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaBasis {
    /// d×k, orthonormal columns.
    pub components: Matrix,
    /// Variances along each component (population normalisation), non-increasing.
    pub eigenvalues: Vec<f64>,
    pub mean: Vec<f64>,
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.components.rows()
    }

    pub fn n_components(&self) -> usize {
        self.components.cols()
    }

    /// Column `j` as an owned vector.
    pub fn component(&self, j: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| self.components.get(i, j)).collect()
    }

    /// Coordinates of `v` in the component basis (no centering).
    pub fn coefficients(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim());
        let k = self.n_components();
        let mut out = vec![0.0; k];
        for (i, &vi) in v.iter().enumerate() {
            let row = self.components.row(i);
            for (o, c) in out.iter_mut().zip(row) {
                *o += vi * c;
            }
        }
        out
    }

    /// Orthogonal projection of `v` onto the span of the components.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let coef = self.coefficients(v);
        (0..self.dim())
            .map(|i| {
                self.components
                    .row(i)
                    .iter()
                    .zip(&coef)
                    .map(|(c, a)| c * a)
                    .sum()
            })
            .collect()
    }

    /// Scores of centered rows: `(X − mean)·C`.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        x.sub_row(&self.mean).matmul(&self.components)
    }

    /// Maps scores back to the original space (adds the mean back).
    pub fn inverse_transform(&self, scores: &Matrix) -> Result<Matrix> {
        let back = scores.matmul(&self.components.transpose())?;
        let neg: Vec<f64> = self.mean.iter().map(|m| -m).collect();
        Ok(back.sub_row(&neg))
    }
}

/// Top-`k` principal components of the rows of `features`.
///
/// Uses the d×d covariance when `d ≤ rows` and the rows×rows Gram matrix otherwise.
/// Each component is signed so its largest-magnitude entry is positive.
pub fn pca(features: &Matrix, k: usize) -> Result<PcaBasis> {
    let (m, d) = features.shape();
    let max_k = (m.saturating_sub(1)).min(d);
    if k == 0 || k > max_k {
        return Err(Error::InvalidArgument(format!(
            "component count {k} outside 1..={max_k} for a {m}x{d} matrix"
        )));
    }
    let mean = features.column_means();
    let centered = features.sub_row(&mean);
    let xc = centered.as_slice();
    let inv_m = 1.0 / m as f64;

    let (eigenvalues, mut components) = if d <= m {
        let mut cov = vec![0.0; d * d];
        gemm(
            d,
            m,
            d,
            inv_m,
            (xc, 1, d as isize),
            (xc, d as isize, 1),
            0.0,
            (&mut cov, d as isize, 1),
        );
        symmetrize(&mut cov, d);
        let (vals, vecs) = sorted_eigen(cov, d, k);
        (vals, vecs)
    } else {
        let mut gram = vec![0.0; m * m];
        gemm(
            m,
            d,
            m,
            inv_m,
            (xc, d as isize, 1),
            (xc, 1, d as isize),
            0.0,
            (&mut gram, m as isize, 1),
        );
        symmetrize(&mut gram, m);
        let (vals, u) = sorted_eigen(gram, m, k);
        // v = Xcᵀu / sqrt(M·λ)
        let mut v = vec![0.0; d * k];
        gemm(
            d,
            m,
            k,
            1.0,
            (xc, 1, d as isize),
            (u.as_slice(), k as isize, 1),
            0.0,
            (&mut v, k as isize, 1),
        );
        for j in 0..k {
            let norm = (0..d).map(|i| v[i * k + j].powi(2)).sum::<f64>().sqrt();
            let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
            for i in 0..d {
                v[i * k + j] *= scale;
            }
        }
        (vals, Matrix::from_raw(d, k, v))
    };

    orthonormalize(&mut components);
    fix_signs(&mut components);
    Ok(PcaBasis {
        components,
        eigenvalues,
        mean,
    })
}

fn symmetrize(a: &mut [f64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
}

/// Top-`k` eigenpairs of a symmetric n×n matrix, eigenvalues descending and clamped at 0.
fn sorted_eigen(a: Vec<f64>, n: usize, k: usize) -> (Vec<f64>, Matrix) {
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .total_cmp(&eig.eigenvalues[i])
            .then(i.cmp(&j))
    });
    let vals = order[..k]
        .iter()
        .map(|&i| eig.eigenvalues[i].max(0.0))
        .collect();
    let vecs = Matrix::from_fn(n, k, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Modified Gram–Schmidt; columns that vanish are replaced by unused standard basis vectors.
fn orthonormalize(c: &mut Matrix) {
    let (d, k) = c.shape();
    let mut next_axis = 0;
    for j in 0..k {
        let mut redo = 0;
        loop {
            for p in 0..j {
                let dot: f64 = (0..d).map(|i| c.get(i, j) * c.get(i, p)).sum();
                for i in 0..d {
                    c.set(i, j, c.get(i, j) - dot * c.get(i, p));
                }
            }
            let norm = (0..d).map(|i| c.get(i, j).powi(2)).sum::<f64>().sqrt();
            if norm > 1e-6 || redo > d {
                for i in 0..d {
                    c.set(i, j, c.get(i, j) / norm);
                }
                break;
            }
            for i in 0..d {
                c.set(i, j, if i == next_axis { 1.0 } else { 0.0 });
            }
            next_axis += 1;
            redo += 1;
        }
    }
}

fn fix_signs(c: &mut Matrix) {
    let (d, k) = c.shape();
    for j in 0..k {
        let mut arg = 0;
        for i in 1..d {
            if c.get(i, j).abs() > c.get(arg, j).abs() {
                arg = i;
            }
        }
        if c.get(arg, j) < 0.0 {
            for i in 0..d {
                c.set(i, j, -c.get(i, j));
            }
        }
    }
}
