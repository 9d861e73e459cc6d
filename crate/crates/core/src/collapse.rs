//! NRC1: how tightly last-layer features concentrate around their top-`n` principal
//! subspace, where `n` is the number of regression targets.
//!
//! ```text
//! NRC1 = (1/M) Σᵢ ‖h̃ᵢ − proj(h̃ᵢ | H_PCA)‖²,   h̃ᵢ = (hᵢ − h̄) / ‖hᵢ − h̄‖
//! ```
//!
//! Small values mean collapse onto an `n`-dimensional linear subspace.

use crate::error::{Error, Result};
use crate::ndstats::{pca, unit_residual, Matrix};

pub const DEFAULT_NORM_EPS: f64 = 1e-12;
/// Reporting cutoff for [`collapse_flag`]; never used inside the metric.
pub const DEFAULT_COLLAPSE_THRESHOLD: f64 = 0.05;

/// Which matrix the principal subspace is fitted to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BasisSource {
    /// Centered, un-normalised features.
    #[default]
    Centered,
    /// The normalised directions `h̃ᵢ` themselves.
    Normalized,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nrc1Options {
    pub norm_eps: f64,
    pub basis: BasisSource,
}

impl Default for Nrc1Options {
    fn default() -> Self {
        Self {
            norm_eps: DEFAULT_NORM_EPS,
            basis: BasisSource::Centered,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nrc1Result {
    pub nrc1: f64,
    pub n_components: usize,
    /// Points whose distance from the mean fell below `norm_eps`.
    pub skipped_points: usize,
}

pub fn nrc1(features: &Matrix, n: usize, norm_eps: f64) -> Result<Nrc1Result> {
    nrc1_with(
        features,
        n,
        &Nrc1Options {
            norm_eps,
            ..Default::default()
        },
    )
}

pub fn nrc1_with(features: &Matrix, n: usize, opts: &Nrc1Options) -> Result<Nrc1Result> {
    let (m, d) = features.shape();
    if n == 0 || n >= d {
        return Err(Error::InvalidArgument(format!(
            "component count {n} must satisfy 1 <= n < {d}"
        )));
    }
    if m < n + 2 {
        return Err(Error::InsufficientPoints {
            needed: n + 2,
            got: m,
        });
    }
    let mean = features.column_means();
    let centered = features.sub_row(&mean);

    let mut directions = Vec::with_capacity(m * d);
    let mut kept = 0usize;
    for row in centered.iter_rows() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < opts.norm_eps {
            continue;
        }
        directions.extend(row.iter().map(|v| v / norm));
        kept += 1;
    }
    if kept == 0 {
        return Err(Error::DegenerateFeatures);
    }
    let directions = Matrix::from_raw(kept, d, directions);

    let basis = match opts.basis {
        BasisSource::Centered => pca(&centered, n)?,
        BasisSource::Normalized => {
            if kept < n + 1 {
                return Err(Error::DegenerateFeatures);
            }
            pca(&directions, n)?
        }
    };
    let total: f64 = directions
        .iter_rows()
        .map(|h| unit_residual(h, &basis))
        .sum();
    Ok(Nrc1Result {
        nrc1: (total / kept as f64).clamp(0.0, 1.0),
        n_components: n,
        skipped_points: m - kept,
    })
}

/// Strictly below the threshold counts as collapsed.
pub fn collapse_flag(nrc1_value: f64, threshold: f64) -> bool {
    nrc1_value < threshold
}
