//! Deterministic numeric kernels shared by the estimators.

mod matrix;
mod neighbors;
mod pca;

pub(crate) use matrix::gemm;
pub use matrix::Matrix;
#[cfg(feature = "parallel")]
pub use neighbors::pairwise_two_nn_parallel;
pub use neighbors::{pairwise_two_nn, pairwise_two_nn_sequential, TwoNnDistances};
pub use pca::{pca, PcaBasis};

use crate::error::{Error, Result};

/// Least-squares slope of a line forced through the origin: `Σxy / Σx²`.
pub fn slope_through_origin(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::Shape(format!(
            "slope fit needs equal non-empty lists, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += x * y;
        sxx += x * x;
    }
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit);
    }
    Ok(sxy / sxx)
}

/// Squared norm of the component of unit vector `v` orthogonal to the basis span.
pub fn residual_fraction(v: &[f64], basis: &PcaBasis) -> Result<f64> {
    if v.len() != basis.dim() {
        return Err(Error::Shape(format!(
            "vector of length {} against a basis in {} dimensions",
            v.len(),
            basis.dim()
        )));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotUnit { norm });
    }
    Ok(unit_residual(v, basis))
}

/// `‖v − proj(v)‖²` without the unit check, clamped to [0, 1].
pub(crate) fn unit_residual(v: &[f64], basis: &PcaBasis) -> f64 {
    let p = basis.project(v);
    let r: f64 = v.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
    r.clamp(0.0, 1.0)
}
