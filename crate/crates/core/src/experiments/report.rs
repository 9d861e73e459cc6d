use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{spearman, ushape_min_location, Architecture, DynamicsTable, RegimeLabel, SweepRecord};
use crate::collapse::DEFAULT_COLLAPSE_THRESHOLD;
use crate::error::{Error, Result};

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const DYNAMICS_FILE: &str = "dynamics.csv";
pub const TIMINGS_FILE: &str = "timings.csv";

const RECORD_COLUMNS: &str =
    "arch,weight_decay,train_mse,test_mse,gap,nrc1,id_h,id_p,id_y,regime,epochs,diverged";

/// Collapsed records whose `id_h` stays below this multiple of `id_y` count as
/// over-compressed in the summary.
const COLLAPSE_ID_FACTOR: f64 = 1.2;

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn format_records_csv(records: &[SweepRecord]) -> String {
    let mut out = format!("# {RECORD_COLUMNS}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.arch,
            r.weight_decay,
            opt(r.train_mse),
            opt(r.test_mse),
            opt(r.gap),
            opt(r.nrc1),
            opt(r.id_h),
            opt(r.id_p),
            r.id_y,
            r.regime.map_or("NA", RegimeLabel::as_str),
            r.epochs,
            r.diverged,
        );
    }
    out
}

pub fn parse_records_csv(text: &str, path: &Path) -> Result<Vec<SweepRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    let mut row = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut row).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        if !more {
            break;
        }
        if row.get(0).is_some_and(|c| c.starts_with('#')) {
            continue;
        }
        let line = row.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        if row.len() != 12 {
            return Err(bad(format!("expected 12 fields, got {}", row.len())));
        }
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|_| bad(format!("bad number {:?} in column {}", &row[i], i + 1)))
        };
        let maybe = |i: usize| -> Result<Option<f64>> {
            if &row[i] == "NA" {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        records.push(SweepRecord {
            arch: row[0]
                .parse::<Architecture>()
                .map_err(|e| bad(e.to_string()))?,
            weight_decay: num(1)?,
            train_mse: maybe(2)?,
            test_mse: maybe(3)?,
            gap: maybe(4)?,
            nrc1: maybe(5)?,
            id_h: maybe(6)?,
            id_p: maybe(7)?,
            id_y: num(8)?,
            regime: match &row[9] {
                "NA" => None,
                s => Some(s.parse::<RegimeLabel>().map_err(|e| bad(e.to_string()))?),
            },
            epochs: row[10]
                .parse()
                .map_err(|_| bad(format!("bad epoch count {:?}", &row[10])))?,
            diverged: row[11]
                .parse()
                .map_err(|_| bad(format!("bad flag {:?}", &row[11])))?,
        });
    }
    Ok(records)
}

pub fn read_records_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records_csv(&text, path)
}

/// Aggregate statistics over non-diverged records.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub records: usize,
    pub diverged: usize,
    pub id_y: f64,
    pub regime_counts: [(RegimeLabel, usize); 3],
    pub collapsed: usize,
    /// Share of collapsed records with `id_h < 1.2·id_y`.
    pub collapsed_low_id_fraction: Option<f64>,
    pub spearman_id_h_train_mse: Option<f64>,
    pub spearman_id_h_test_mse: Option<f64>,
    pub ushape_min_id_h: Option<f64>,
    pub best_test: Option<(Architecture, f64, f64)>,
}

pub fn summarize(records: &[SweepRecord], collapse_threshold: f64) -> Result<SweepSummary> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidArgument("no records to summarise".into()))?;
    let usable: Vec<&SweepRecord> = records.iter().filter(|r| r.usable()).collect();
    let id_h: Vec<f64> = usable.iter().map(|r| r.id_h.unwrap()).collect();
    let train: Vec<f64> = usable.iter().map(|r| r.train_mse.unwrap()).collect();
    let test: Vec<f64> = usable.iter().map(|r| r.test_mse.unwrap()).collect();

    let regime_counts =
        RegimeLabel::ALL.map(|l| (l, usable.iter().filter(|r| r.regime == Some(l)).count()));
    let collapsed: Vec<&&SweepRecord> = usable
        .iter()
        .filter(|r| r.nrc1.is_some_and(|v| v < collapse_threshold))
        .collect();
    let collapsed_low_id_fraction = (!collapsed.is_empty()).then(|| {
        let low = collapsed
            .iter()
            .filter(|r| r.id_h.unwrap() < COLLAPSE_ID_FACTOR * r.id_y)
            .count();
        low as f64 / collapsed.len() as f64
    });
    let best_test = usable
        .iter()
        .min_by(|a, b| a.test_mse.unwrap().total_cmp(&b.test_mse.unwrap()))
        .map(|r| (r.arch, r.weight_decay, r.test_mse.unwrap()));

    Ok(SweepSummary {
        records: records.len(),
        diverged: records.iter().filter(|r| r.diverged).count(),
        id_y: first.id_y,
        regime_counts,
        collapsed: collapsed.len(),
        collapsed_low_id_fraction,
        spearman_id_h_train_mse: spearman(&id_h, &train).ok(),
        spearman_id_h_test_mse: spearman(&id_h, &test).ok(),
        ushape_min_id_h: ushape_min_location(&id_h, &test).ok(),
        best_test,
    })
}

pub fn format_summary(s: &SweepSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "records: {}", s.records);
    let _ = writeln!(out, "diverged: {}", s.diverged);
    let _ = writeln!(out, "id_y: {}", s.id_y);
    for (label, count) in s.regime_counts {
        let _ = writeln!(out, "regime_{label}: {count}");
    }
    let _ = writeln!(out, "collapsed: {}", s.collapsed);
    let _ = writeln!(
        out,
        "collapsed_low_id_fraction: {}",
        opt(s.collapsed_low_id_fraction)
    );
    let _ = writeln!(
        out,
        "spearman_id_h_train_mse: {}",
        opt(s.spearman_id_h_train_mse)
    );
    let _ = writeln!(
        out,
        "spearman_id_h_test_mse: {}",
        opt(s.spearman_id_h_test_mse)
    );
    let _ = writeln!(out, "ushape_min_id_h: {}", opt(s.ushape_min_id_h));
    match s.best_test {
        Some((arch, l, mse)) => {
            let _ = writeln!(out, "best_test_arch: {arch}");
            let _ = writeln!(out, "best_test_weight_decay: {l}");
            let _ = writeln!(out, "best_test_mse: {mse}");
        }
        None => {
            let _ = writeln!(out, "best_test_arch: NA");
        }
    }
    out
}

/// Layer dynamics for every cell that recorded them.
pub fn format_dynamics_csv(records: &[SweepRecord], dynamics: &[Option<DynamicsTable>]) -> String {
    let mut out = String::from("# arch,weight_decay,epoch,layer,id\n");
    for (r, table) in records.iter().zip(dynamics) {
        for row in table.iter().flat_map(|t| &t.rows) {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.arch,
                r.weight_decay,
                row.epoch,
                row.layer,
                opt(row.id)
            );
        }
    }
    out
}

pub fn format_timings_csv(records: &[SweepRecord], wall_seconds: &[f64]) -> String {
    let mut out = String::from("# arch,weight_decay,wall_seconds\n");
    for (r, t) in records.iter().zip(wall_seconds) {
        let _ = writeln!(out, "{},{},{t:.3}", r.arch, r.weight_decay);
    }
    out
}

/// Writes `records.csv`, `summary.txt` and, when any cell has dynamics, `dynamics.csv`.
pub fn emit_report(
    records: &[SweepRecord],
    dynamics: &[Option<DynamicsTable>],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let summary = summarize(records, DEFAULT_COLLAPSE_THRESHOLD)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = vec![
        (out_dir.join(RECORDS_FILE), format_records_csv(records)),
        (out_dir.join(SUMMARY_FILE), format_summary(&summary)),
    ];
    if dynamics.iter().any(Option::is_some) {
        files.push((
            out_dir.join(DYNAMICS_FILE),
            format_dynamics_csv(records, dynamics),
        ));
    }
    let mut written = Vec::new();
    for (path, text) in files {
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
