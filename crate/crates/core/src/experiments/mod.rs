//! Sweeps over architectures and weight decay, regime labels, and reports.
//!
//! A sweep trains one model per `(architecture, weight decay)` cell of a [`SweepGrid`],
//! measures NRC1 and the intrinsic dimension of last-layer features (`id_h`) and
//! predictions (`id_p`) on a fixed probe subsample, and compares `id_h` with the target
//! dimension `id_y` to label the cell over-compressed, balanced or under-compressed.

mod report;
mod sweep;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use report::{
    emit_report, format_dynamics_csv, format_records_csv, format_summary, format_timings_csv,
    parse_records_csv, read_records_csv, summarize, SweepSummary, DYNAMICS_FILE, RECORDS_FILE,
    SUMMARY_FILE, TIMINGS_FILE,
};
pub use sweep::{
    layer_id_dynamics, run_cell, run_sweep, CellOutcome, DynamicsRow, DynamicsTable, PreparedData,
    SweepGrid, SweepOutcome, SweepRecord,
};

/// Relative tolerance for the balanced band when none is given.
pub const DEFAULT_REL_TOL: f64 = 0.15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegimeLabel {
    OverCompressed,
    Balanced,
    UnderCompressed,
}

impl RegimeLabel {
    pub const ALL: [RegimeLabel; 3] = [
        RegimeLabel::OverCompressed,
        RegimeLabel::Balanced,
        RegimeLabel::UnderCompressed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegimeLabel::OverCompressed => "OverCompressed",
            RegimeLabel::Balanced => "Balanced",
            RegimeLabel::UnderCompressed => "UnderCompressed",
        }
    }
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegimeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RegimeLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown regime label {s:?}")))
    }
}

/// Hidden-layer count and width, written `LxW` (e.g. `3x64`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Architecture {
    pub layers: usize,
    pub width: usize,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.layers, self.width)
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("architecture {s:?} is not of the form LxW"));
        let (l, w) = s.trim().split_once('x').ok_or_else(bad)?;
        let layers = l.trim().parse().map_err(|_| bad())?;
        let width = w.trim().parse().map_err(|_| bad())?;
        if layers == 0 || width == 0 {
            return Err(bad());
        }
        Ok(Self { layers, width })
    }
}

/// Labels `id_h` against `id_y`: balanced within `rel_tol·id_y`, otherwise over- or
/// under-compressed.
pub fn classify_regime(id_h: f64, id_y: f64, rel_tol: f64) -> Result<RegimeLabel> {
    if !(id_h > 0.0 && id_h.is_finite()) || !(id_y > 0.0 && id_y.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "dimensions must be positive, got id_h={id_h}, id_y={id_y}"
        )));
    }
    if !(rel_tol >= 0.0 && rel_tol.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "tolerance {rel_tol} must be non-negative"
        )));
    }
    Ok(if (id_h - id_y).abs() <= rel_tol * id_y {
        RegimeLabel::Balanced
    } else if id_h < id_y * (1.0 - rel_tol) {
        RegimeLabel::OverCompressed
    } else {
        RegimeLabel::UnderCompressed
    })
}

/// Ranks starting at 1; tied values share the mean of their positions.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("xs"));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation("ys"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!(
            "spearman: {} values against {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: xs.len(),
        });
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "spearman: non-finite value {v}"
        )));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// `id_h` of the record with the lowest test MSE; ties go to the smaller `id_h`.
pub fn ushape_min_location(id_h: &[f64], test_mse: &[f64]) -> Result<f64> {
    if id_h.len() != test_mse.len() {
        return Err(Error::Shape(format!(
            "u-shape: {} id values against {} errors",
            id_h.len(),
            test_mse.len()
        )));
    }
    if id_h.len() < 5 {
        return Err(Error::InsufficientPoints {
            needed: 5,
            got: id_h.len(),
        });
    }
    if let Some(v) = id_h.iter().chain(test_mse).find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "u-shape: non-finite value {v}"
        )));
    }
    let best = id_h
        .iter()
        .zip(test_mse)
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.total_cmp(b.0)))
        .expect("non-empty");
    Ok(*best.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_examples() {
        assert_eq!(
            classify_regime(1.0, 2.0, 0.15).unwrap(),
            RegimeLabel::OverCompressed
        );
        assert_eq!(
            classify_regime(2.0, 2.0, 0.15).unwrap(),
            RegimeLabel::Balanced
        );
        assert_eq!(
            classify_regime(8.0, 2.0, 0.15).unwrap(),
            RegimeLabel::UnderCompressed
        );
        assert_eq!(
            classify_regime(2.3, 2.0, 0.15).unwrap(),
            RegimeLabel::Balanced
        );
        assert_eq!(
            classify_regime(2.31, 2.0, 0.15).unwrap(),
            RegimeLabel::UnderCompressed
        );
        assert!(classify_regime(0.0, 2.0, 0.15).is_err());
        assert!(classify_regime(1.0, -2.0, 0.15).is_err());
    }

    #[test]
    fn regime_round_trips_through_text() {
        for l in RegimeLabel::ALL {
            assert_eq!(l.to_string().parse::<RegimeLabel>().unwrap(), l);
        }
        assert!("balanced".parse::<RegimeLabel>().is_err());
    }

    #[test]
    fn architecture_text() {
        let a: Architecture = "3x64".parse().unwrap();
        assert_eq!(
            a,
            Architecture {
                layers: 3,
                width: 64
            }
        );
        assert_eq!(a.to_string(), "3x64");
        for bad in ["3", "x64", "0x4", "3x", "ax4"] {
            assert!(bad.parse::<Architecture>().is_err(), "{bad}");
        }
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(),
            1.0
        );
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap(),
            -1.0
        );
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((r - 0.6).abs() < 1e-12);
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn ushape_examples() {
        let ids = [1.0, 2.0, 3.0, 4.0, 5.0];
        let convex: Vec<f64> = ids.iter().map(|x: &f64| (x - 3.0).powi(2) + 1.0).collect();
        assert_eq!(ushape_min_location(&ids, &convex).unwrap(), 3.0);
        assert_eq!(
            ushape_min_location(&ids, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap(),
            5.0
        );
        assert_eq!(
            ushape_min_location(&[4.0, 2.0, 3.0, 5.0, 6.0], &[1.0, 1.0, 2.0, 3.0, 4.0]).unwrap(),
            2.0
        );
        assert!(ushape_min_location(&ids[..4], &convex[..4]).is_err());
    }
}
