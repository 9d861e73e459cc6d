//! Exact first/second nearest-neighbour distances by blocked brute force.
//!
//! Every pairwise squared distance is accumulated coordinate by coordinate in index order,
//! so the result is bitwise identical to a plain double loop and independent of how the
//! row blocks are scheduled.

use super::Matrix;
use crate::error::{Error, Result};

/// Rows handled together so that one column tile is reused across them.
const ROW_BLOCK: usize = 32;
/// Candidate neighbours scanned per tile.
const COL_TILE: usize = 256;

/// Per-point distances to the first and second nearest neighbour.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoNnDistances {
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
}

impl TwoNnDistances {
    pub fn len(&self) -> usize {
        self.r1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r1.is_empty()
    }

    /// Ratios `r2 / r1`.
    pub fn ratios(&self) -> Vec<f64> {
        self.r1.iter().zip(&self.r2).map(|(a, b)| b / a).collect()
    }
}

/// Exact 2-NN distances for every row, using the parallel kernel when enabled.
pub fn pairwise_two_nn(points: &Matrix) -> Result<TwoNnDistances> {
    #[cfg(feature = "parallel")]
    {
        pairwise_two_nn_parallel(points)
    }
    #[cfg(not(feature = "parallel"))]
    {
        pairwise_two_nn_sequential(points)
    }
}

pub fn pairwise_two_nn_sequential(points: &Matrix) -> Result<TwoNnDistances> {
    check_rows(points)?;
    let xt = points.transpose();
    let starts: Vec<usize> = (0..points.rows()).step_by(ROW_BLOCK).collect();
    let best: Vec<(f64, f64)> = starts
        .iter()
        .flat_map(|&s| scan_block(points, &xt, s))
        .collect();
    finish(best)
}

#[cfg(feature = "parallel")]
pub fn pairwise_two_nn_parallel(points: &Matrix) -> Result<TwoNnDistances> {
    use rayon::prelude::*;
    check_rows(points)?;
    let xt = points.transpose();
    let starts: Vec<usize> = (0..points.rows()).step_by(ROW_BLOCK).collect();
    let blocks: Vec<Vec<(f64, f64)>> = starts
        .par_iter()
        .map(|&s| scan_block(points, &xt, s))
        .collect();
    finish(blocks.into_iter().flatten().collect())
}

fn check_rows(points: &Matrix) -> Result<()> {
    if points.rows() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: points.rows(),
        });
    }
    Ok(())
}

/// Smallest two squared distances for rows `start..start + ROW_BLOCK`.
fn scan_block(points: &Matrix, xt: &Matrix, start: usize) -> Vec<(f64, f64)> {
    let m = points.rows();
    let dim = points.cols();
    let end = (start + ROW_BLOCK).min(m);
    let mut best = vec![(f64::INFINITY, f64::INFINITY); end - start];
    let mut acc = [0.0f64; COL_TILE];
    let cols = xt.as_slice();

    for j0 in (0..m).step_by(COL_TILE) {
        let width = COL_TILE.min(m - j0);
        for (slot, i) in best.iter_mut().zip(start..end) {
            let acc = &mut acc[..width];
            acc.fill(0.0);
            for (k, &xi) in points.row(i).iter().enumerate() {
                let col = &cols[k * m + j0..k * m + j0 + width];
                for (a, &xj) in acc.iter_mut().zip(col) {
                    let d = xi - xj;
                    *a += d * d;
                }
            }
            debug_assert!(dim > 0);
            for (offset, &s) in acc.iter().enumerate() {
                if j0 + offset == i {
                    continue;
                }
                if s < slot.0 {
                    slot.1 = slot.0;
                    slot.0 = s;
                } else if s < slot.1 {
                    slot.1 = s;
                }
            }
        }
    }
    best
}

fn finish(best: Vec<(f64, f64)>) -> Result<TwoNnDistances> {
    let mut r1 = Vec::with_capacity(best.len());
    let mut r2 = Vec::with_capacity(best.len());
    for (row, (a, b)) in best.into_iter().enumerate() {
        if a <= 0.0 {
            return Err(Error::DuplicatePoints { row });
        }
        r1.push(a.sqrt());
        r2.push(b.sqrt());
    }
    Ok(TwoNnDistances { r1, r2 })
}
