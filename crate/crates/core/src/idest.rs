//! Global intrinsic dimension by the two-nearest-neighbour (2-NN) ratio method.
//!
//! For locally uniform data on a `d`-dimensional manifold the ratio `μ = r2/r1` of
//! second to first neighbour distances is Pareto distributed, `F(μ) = 1 − μ^(−d)`. The
//! estimator sorts the ratios, assigns empirical CDF values `i/M`, and fits the line
//! `−log(1 − F) = d · log μ` through the origin over `i = 1..M−1` (the last point has
//! `F = 1` and is dropped).

use std::collections::HashSet;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::ndstats::{pairwise_two_nn, slope_through_origin, Matrix};
use crate::seeds;

/// Fewest points (after deduplication) the estimator accepts.
pub const MIN_POINTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdEstimate {
    pub id: f64,
    pub pairs_used: usize,
    pub discard_fraction: f64,
    /// RMS residual of the origin-constrained fit in `(log μ, −log(1−F))` space.
    pub fit_rmse: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdOptions {
    /// Fraction of the largest-μ pairs dropped before fitting.
    pub discard_fraction: f64,
    /// Remove exact duplicate rows first.
    pub dedupe: bool,
    /// Seed for the decimation subsampler.
    pub seed: u64,
}

impl Default for IdOptions {
    fn default() -> Self {
        Self {
            discard_fraction: 0.0,
            dedupe: true,
            seed: 0,
        }
    }
}

impl IdOptions {
    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.discard_fraction) {
            return Err(Error::InvalidArgument(format!(
                "discard fraction {} outside [0, 1)",
                self.discard_fraction
            )));
        }
        Ok(())
    }
}

/// Mean and spread of estimates at one subsample size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecimationPoint {
    pub subsample_size: usize,
    pub mean_id: f64,
    pub std_id: f64,
    pub repetitions: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecimationCurve {
    pub points: Vec<DecimationPoint>,
}

/// Removes bitwise-duplicate rows, keeping first occurrences in order.
///
/// `-0.0` and `0.0` are treated as the same value.
pub fn dedupe_points(points: &Matrix) -> (Matrix, usize) {
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(points.rows());
    let mut keep = Vec::with_capacity(points.rows());
    for (i, row) in points.iter_rows().enumerate() {
        let key: Vec<u64> = row.iter().map(|v| (v + 0.0).to_bits()).collect();
        if seen.insert(key) {
            keep.push(i);
        }
    }
    let removed = points.rows() - keep.len();
    if removed == 0 {
        (points.clone(), 0)
    } else {
        (points.select_rows(&keep), removed)
    }
}

/// 2-NN intrinsic dimension of the rows of `points`.
pub fn estimate_id(points: &Matrix, opts: &IdOptions) -> Result<IdEstimate> {
    opts.validate()?;
    let deduped;
    let pts = if opts.dedupe {
        deduped = dedupe_points(points).0;
        &deduped
    } else {
        points
    };
    if pts.rows() < MIN_POINTS {
        return Err(Error::InsufficientPoints {
            needed: MIN_POINTS,
            got: pts.rows(),
        });
    }
    let nn = pairwise_two_nn(pts)?;
    let ratios = nn.ratios();
    if let Some(row) = ratios.iter().position(|m| !m.is_finite()) {
        return Err(Error::NonFiniteRatio { row });
    }
    fit_ratios(&ratios, opts.discard_fraction)
}

/// Fits the Pareto exponent to a list of neighbour-distance ratios (each ≥ 1).
///
/// This is the sort-and-fit half of [`estimate_id`], exposed so ratios from any source
/// can be checked against the same path.
pub fn fit_ratios(ratios: &[f64], discard_fraction: f64) -> Result<IdEstimate> {
    if !(0.0..1.0).contains(&discard_fraction) {
        return Err(Error::InvalidArgument(format!(
            "discard fraction {discard_fraction} outside [0, 1)"
        )));
    }
    let m = ratios.len();
    if let Some(row) = ratios.iter().position(|v| !v.is_finite() || *v < 1.0) {
        return Err(Error::NonFiniteRatio { row });
    }
    let mut sorted = ratios.to_vec();
    // Stable: equal ratios keep their original order.
    sorted.sort_by(f64::total_cmp);

    let pairs = m.saturating_sub(1);
    let dropped = (discard_fraction * pairs as f64).ceil() as usize;
    let used = pairs.saturating_sub(dropped);
    if used < 2 {
        return Err(Error::InsufficientPoints {
            needed: 3 + dropped,
            got: m,
        });
    }
    let inv_m = 1.0 / m as f64;
    let xs: Vec<f64> = sorted[..used].iter().map(|mu| mu.ln()).collect();
    let ys: Vec<f64> = (1..=used).map(|i| -(1.0 - i as f64 * inv_m).ln()).collect();
    let id = slope_through_origin(&xs, &ys)?;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - id * x).powi(2)).sum();
    Ok(IdEstimate {
        id,
        pairs_used: used,
        discard_fraction,
        fit_rmse: (sse / used as f64).sqrt(),
    })
}

/// Estimates on repeated uniform subsamples at each size.
///
/// Repetition `r` at size index `s` draws from its own seeded stream, so the curve does
/// not depend on execution order.
pub fn decimation_curve(
    points: &Matrix,
    sizes: &[usize],
    reps: usize,
    seed: u64,
    opts: &IdOptions,
) -> Result<DecimationCurve> {
    opts.validate()?;
    if sizes.is_empty() {
        return Err(Error::InvalidArgument("no subsample sizes given".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidArgument(
            "repetitions must be at least 1".into(),
        ));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "subsample sizes must be strictly increasing".into(),
        ));
    }
    for &s in sizes {
        if s < MIN_POINTS || s > points.rows() {
            return Err(Error::InvalidArgument(format!(
                "subsample size {s} outside {MIN_POINTS}..={}",
                points.rows()
            )));
        }
    }

    let jobs: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|s| (0..reps).map(move |r| (s, r)))
        .collect();
    let run = |&(s, r): &(usize, usize)| -> Result<f64> {
        let size = sizes[s];
        if size == points.rows() {
            return estimate_id(points, opts).map(|e| e.id);
        }
        let mut rng = seeds::rng(seeds::derive(seed, &[size as u64, r as u64]));
        let mut idx = index::sample(&mut rng, points.rows(), size).into_vec();
        idx.sort_unstable();
        estimate_id(&points.select_rows(&idx), opts).map(|e| e.id)
    };
    #[cfg(feature = "parallel")]
    let ids: Vec<Result<f64>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let ids: Vec<Result<f64>> = jobs.iter().map(run).collect();

    let ids = ids.into_iter().collect::<Result<Vec<f64>>>()?;
    let points = sizes
        .iter()
        .zip(ids.chunks_exact(reps))
        .map(|(&size, chunk)| {
            let mean = chunk.iter().sum::<f64>() / reps as f64;
            let std = if reps > 1 {
                (chunk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt()
            } else {
                0.0
            };
            DecimationPoint {
                subsample_size: size,
                mean_id: mean,
                std_id: std,
                repetitions: reps,
            }
        })
        .collect();
    Ok(DecimationCurve { points })
}
