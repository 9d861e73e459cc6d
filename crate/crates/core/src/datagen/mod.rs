//! Datasets: synthetic tasks with known intrinsic dimension, CSV ingestion, target
//! normalisation and train/test splits.

mod csvio;
mod synthetic;

pub use csvio::{format_matrix_csv, parse_matrix_csv, read_matrix_csv, write_matrix_csv};
pub use synthetic::{
    gen_hypercube, gen_manifold_task, gen_manifold_task_with_latents, noise_matrix,
    random_orthonormal, ManifoldMaps, ManifoldSpec, SmoothMap,
};

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::ndstats::Matrix;
use crate::seeds;

pub const INPUTS_FILE: &str = "inputs.csv";
pub const TARGETS_FILE: &str = "targets.csv";
pub const META_FILE: &str = "meta.txt";

/// Ground truth recorded by the synthetic generators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruth {
    pub latent_dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Paired inputs (M×D) and targets (M×n).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub inputs: Matrix,
    pub targets: Matrix,
    pub meta: Option<GroundTruth>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, inputs: Matrix, targets: Matrix) -> Result<Self> {
        if inputs.rows() != targets.rows() {
            return Err(Error::Shape(format!(
                "inputs have {} rows but targets have {}",
                inputs.rows(),
                targets.rows()
            )));
        }
        Ok(Self {
            name: name.into(),
            inputs,
            targets,
            meta: None,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn target_dim(&self) -> usize {
        self.targets.cols()
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            inputs: self.inputs.select_rows(rows),
            targets: self.targets.select_rows(rows),
            meta: self.meta,
        }
    }

    /// Writes `inputs.csv`, `targets.csv` and a `meta.txt` sidecar into `dir`.
    pub fn save_dir(&self, dir: &Path, spec: Option<&ManifoldSpec>) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let header = |prefix: &str, n: usize| {
            (0..n)
                .map(|j| format!("{prefix}{}", j + 1))
                .collect::<Vec<_>>()
                .join(",")
        };
        write_matrix_csv(
            &self.inputs,
            &dir.join(INPUTS_FILE),
            Some(&header("x", self.input_dim())),
        )?;
        write_matrix_csv(
            &self.targets,
            &dir.join(TARGETS_FILE),
            Some(&header("y", self.target_dim())),
        )?;
        let mut meta = String::new();
        let _ = writeln!(meta, "name: {}", self.name);
        let _ = writeln!(meta, "rows: {}", self.len());
        let _ = writeln!(meta, "input_dim: {}", self.input_dim());
        let _ = writeln!(meta, "target_dim: {}", self.target_dim());
        if let Some(spec) = spec {
            let _ = writeln!(meta, "generator: manifold");
            for line in spec.to_kv().lines() {
                if !line.starts_with("input_dim") && !line.starts_with("target_dim") {
                    let _ = writeln!(meta, "{line}");
                }
            }
        } else if let Some(gt) = &self.meta {
            let _ = writeln!(meta, "latent_dim: {}", gt.latent_dim);
            let _ = writeln!(meta, "target_noise_sigma: {}", gt.noise_sigma);
            let _ = writeln!(meta, "seed: {}", gt.seed);
        }
        let path = dir.join(META_FILE);
        std::fs::write(&path, meta).map_err(|e| Error::io(path, e))
    }

    /// Reads a directory written by [`Dataset::save_dir`]; `meta.txt` is optional.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut ds = load_csv_dataset(&dir.join(INPUTS_FILE), &dir.join(TARGETS_FILE))?;
        let meta_path = dir.join(META_FILE);
        if meta_path.exists() {
            let kv = KvFile::read(&meta_path)?;
            if let Some(name) = kv.get_str("name") {
                ds.name = name.to_string();
            }
            if let (Some(latent_dim), Some(seed)) = (kv.get("latent_dim")?, kv.get("seed")?) {
                ds.meta = Some(GroundTruth {
                    latent_dim,
                    noise_sigma: kv.get("target_noise_sigma")?.unwrap_or(0.0),
                    seed,
                });
            }
        } else if let Some(n) = dir.file_name() {
            ds.name = n.to_string_lossy().into_owned();
        }
        Ok(ds)
    }
}

/// Loads a dataset from two CSV files; no normalisation is applied.
pub fn load_csv_dataset(inputs_path: &Path, targets_path: &Path) -> Result<Dataset> {
    let inputs = read_matrix_csv(inputs_path)?;
    let targets = read_matrix_csv(targets_path)?;
    if inputs.rows() != targets.rows() {
        return Err(Error::Shape(format!(
            "{} has {} rows but {} has {}",
            inputs_path.display(),
            inputs.rows(),
            targets_path.display(),
            targets.rows()
        )));
    }
    let name = inputs_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, inputs, targets)
}

/// Per-coordinate target mean and (population) standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn apply(&self, targets: &Matrix) -> Matrix {
        let mut out = targets.sub_row(&self.mean);
        for r in out.as_mut_slice().chunks_exact_mut(self.std.len()) {
            r.iter_mut().zip(&self.std).for_each(|(v, s)| *v /= s);
        }
        out
    }

    pub fn invert(&self, normalized: &Matrix) -> Matrix {
        let mut out = normalized.clone();
        for r in out.as_mut_slice().chunks_exact_mut(self.std.len()) {
            for ((v, s), m) in r.iter_mut().zip(&self.std).zip(&self.mean) {
                *v = *v * s + m;
            }
        }
        out
    }
}

/// Standardises every target coordinate to zero mean and unit population variance.
pub fn normalize_targets(ds: &Dataset) -> Result<(Dataset, NormStats)> {
    let t = &ds.targets;
    let mean = t.column_means();
    let std: Vec<f64> = (0..t.cols())
        .map(|j| {
            (t.iter_rows().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / t.rows() as f64).sqrt()
        })
        .collect();
    if let Some((coord, &s)) = std.iter().enumerate().find(|(_, &s)| s.is_nan() || s <= 1e-12) {
        return Err(Error::ConstantTarget { coord, std: s });
    }
    let stats = NormStats { mean, std };
    let out = Dataset {
        targets: stats.apply(t),
        ..ds.clone()
    };
    Ok((out, stats))
}

/// Seeded disjoint split; each part keeps the original row order.
pub fn split_dataset(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let m = ds.len();
    let n_train = (train_fraction * m as f64).round() as usize;
    if n_train == 0 || n_train == m {
        return Err(Error::InvalidArgument(format!(
            "fraction {train_fraction} of {m} rows leaves an empty split"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut seeds::rng(seed));
    let (train, test) = order.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.select(train), ds.select(test)))
}
