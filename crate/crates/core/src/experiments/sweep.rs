use std::path::Path;
use std::time::Instant;

use rand::seq::index;

use super::{classify_regime, Architecture, RegimeLabel, DEFAULT_REL_TOL};
use crate::collapse::{nrc1, DEFAULT_NORM_EPS};
use crate::datagen::{normalize_targets, split_dataset, Dataset, NormStats};
use crate::error::{Error, Result};
use crate::idest::{estimate_id, IdOptions};
use crate::kv::KvFile;
use crate::mlp::{init_model, mse, train, MlpConfig, MlpModel, ProbeLog, TrainOptions};
use crate::ndstats::Matrix;
use crate::seeds;

const SPLIT_TAG: u64 = 0x5e11;
const PROBE_TAG: u64 = 0x9b0e;
const INIT_TAG: u64 = 1;
const SHUFFLE_TAG: u64 = 2;

/// Everything needed to run a sweep over one dataset.
///
/// `train.weight_decay`, `train.shuffle_seed` and `train.probe_epochs` are overwritten
/// per cell; the remaining training fields are shared by all cells.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub architectures: Vec<Architecture>,
    pub weight_decays: Vec<f64>,
    pub train: TrainOptions,
    pub seed: u64,
    pub train_fraction: f64,
    /// Rows of the training split used for feature probes.
    pub probe_size: usize,
    pub normalize_targets: bool,
    pub rel_tol: f64,
    pub norm_eps: f64,
    /// Epochs at which per-layer dimensions are recorded; empty disables dynamics.
    pub probe_epochs: Vec<usize>,
    /// Concurrent training runs; 0 uses every available core.
    pub workers: usize,
    pub id: IdOptions,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            architectures: vec![Architecture {
                layers: 3,
                width: 64,
            }],
            weight_decays: vec![0.0],
            train: TrainOptions::default(),
            seed: 0,
            train_fraction: 0.8,
            probe_size: crate::mlp::DEFAULT_PROBE_SIZE,
            normalize_targets: true,
            rel_tol: DEFAULT_REL_TOL,
            norm_eps: DEFAULT_NORM_EPS,
            probe_epochs: Vec::new(),
            workers: 0,
            id: IdOptions::default(),
        }
    }
}

const GRID_KEYS: &[&str] = &[
    "architectures",
    "weight_decays",
    "epochs",
    "batch_size",
    "learning_rate",
    "penalize_hidden_biases",
    "seed",
    "train_fraction",
    "probe_size",
    "normalize_targets",
    "rel_tol",
    "norm_eps",
    "probe_epochs",
    "workers",
    "discard_fraction",
];

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.architectures.is_empty() {
            return Err(Error::InvalidArgument("no architectures in grid".into()));
        }
        if self.weight_decays.is_empty() {
            return Err(Error::InvalidArgument("no weight decays in grid".into()));
        }
        if let Some(l) = self
            .weight_decays
            .iter()
            .find(|l| !(**l >= 0.0 && l.is_finite()))
        {
            return Err(Error::InvalidArgument(format!(
                "weight decay {l} must be non-negative"
            )));
        }
        if self.probe_size < crate::idest::MIN_POINTS {
            return Err(Error::InvalidArgument(format!(
                "probe size {} below {}",
                self.probe_size,
                crate::idest::MIN_POINTS
            )));
        }
        if self.probe_epochs.iter().any(|&e| e > self.train.epochs) {
            return Err(Error::InvalidArgument(format!(
                "probe epochs must not exceed {} epochs",
                self.train.epochs
            )));
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tolerance {} must be non-negative",
                self.rel_tol
            )));
        }
        Ok(())
    }

    /// Reads a `key: value` grid file. Lists are comma-separated; architectures are
    /// written `LxW`.
    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?)
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        if let Some(k) = kv.unknown_keys(GRID_KEYS).first() {
            return Err(Error::Parse {
                path: kv.path().to_path_buf(),
                line: 0,
                msg: format!("unknown key {k:?}"),
            });
        }
        let d = Self::default();
        let mut probe_epochs: Vec<usize> = kv.get_list("probe_epochs")?.unwrap_or_default();
        probe_epochs.sort_unstable();
        probe_epochs.dedup();
        let grid = Self {
            architectures: kv.get_list("architectures")?.unwrap_or(d.architectures),
            weight_decays: kv.get_list("weight_decays")?.unwrap_or(d.weight_decays),
            train: TrainOptions {
                epochs: kv.get("epochs")?.unwrap_or(d.train.epochs),
                batch_size: kv.get("batch_size")?.unwrap_or(d.train.batch_size),
                learning_rate: kv.get("learning_rate")?.unwrap_or(d.train.learning_rate),
                penalize_hidden_biases: kv
                    .get("penalize_hidden_biases")?
                    .unwrap_or(d.train.penalize_hidden_biases),
                ..d.train
            },
            seed: kv.get("seed")?.unwrap_or(d.seed),
            train_fraction: kv.get("train_fraction")?.unwrap_or(d.train_fraction),
            probe_size: kv.get("probe_size")?.unwrap_or(d.probe_size),
            normalize_targets: kv.get("normalize_targets")?.unwrap_or(d.normalize_targets),
            rel_tol: kv.get("rel_tol")?.unwrap_or(d.rel_tol),
            norm_eps: kv.get("norm_eps")?.unwrap_or(d.norm_eps),
            probe_epochs,
            workers: kv.get("workers")?.unwrap_or(d.workers),
            id: IdOptions {
                discard_fraction: kv.get("discard_fraction")?.unwrap_or(0.0),
                ..d.id
            },
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid cells in canonical order: architecture, then weight decay.
    pub fn cells(&self) -> Vec<(Architecture, f64)> {
        let mut archs = self.architectures.clone();
        archs.sort();
        archs.dedup();
        let mut decays = self.weight_decays.clone();
        decays.sort_by(f64::total_cmp);
        decays.dedup();
        archs
            .iter()
            .flat_map(|&a| decays.iter().map(move |&l| (a, l)))
            .collect()
    }

    fn cell_seed(&self, arch: Architecture, weight_decay: f64) -> u64 {
        seeds::derive(
            self.seed,
            &[
                arch.layers as u64,
                arch.width as u64,
                weight_decay.to_bits(),
            ],
        )
    }
}

/// Splits, probe subsample and target dimension shared by every cell of a sweep.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    pub probe: Matrix,
    pub id_y: f64,
    pub norm: Option<NormStats>,
}

impl PreparedData {
    pub fn new(dataset: &Dataset, grid: &SweepGrid) -> Result<Self> {
        let (ds, norm) = if grid.normalize_targets {
            let (ds, stats) = normalize_targets(dataset)?;
            (ds, Some(stats))
        } else {
            (dataset.clone(), None)
        };
        let id_y = estimate_id(&ds.targets, &grid.id)?.id;
        let (train, test) = split_dataset(
            &ds,
            grid.train_fraction,
            seeds::derive(grid.seed, &[SPLIT_TAG]),
        )?;
        let size = grid.probe_size.min(train.len());
        let mut rng = seeds::rng(seeds::derive(grid.seed, &[PROBE_TAG]));
        let mut rows = index::sample(&mut rng, train.len(), size).into_vec();
        rows.sort_unstable();
        let probe = train.inputs.select_rows(&rows);
        Ok(Self {
            train,
            test,
            probe,
            id_y,
            norm,
        })
    }
}

/// One trained cell. Optional metrics are `None` when undefined (diverged run, fully
/// collapsed features).
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub arch: Architecture,
    pub weight_decay: f64,
    pub train_mse: Option<f64>,
    pub test_mse: Option<f64>,
    pub gap: Option<f64>,
    pub nrc1: Option<f64>,
    pub id_h: Option<f64>,
    pub id_p: Option<f64>,
    pub id_y: f64,
    pub regime: Option<RegimeLabel>,
    pub epochs: usize,
    pub diverged: bool,
}

impl SweepRecord {
    /// Whether the record enters correlation statistics.
    pub fn usable(&self) -> bool {
        !self.diverged && self.id_h.is_some() && self.train_mse.is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsRow {
    pub epoch: usize,
    /// `input`, `hidden_1` … `hidden_L`, `output` or `target`.
    pub layer: String,
    pub id: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DynamicsTable {
    pub rows: Vec<DynamicsRow>,
}

impl DynamicsTable {
    pub fn get(&self, epoch: usize, layer: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.epoch == epoch && r.layer == layer)
            .and_then(|r| r.id)
    }

    pub fn epochs(&self) -> Vec<usize> {
        let mut e: Vec<usize> = self.rows.iter().map(|r| r.epoch).collect();
        e.dedup();
        e
    }
}

/// Per-epoch, per-layer intrinsic dimension from captured activations.
///
/// Every probe epoch gets rows for the inputs, each hidden layer, the predictions and
/// the target reference `id_y`. Layers whose estimate fails (for example all activations
/// identical after collapse) are recorded as missing.
pub fn layer_id_dynamics(log: &ProbeLog, id_y: f64, opts: &IdOptions) -> Result<DynamicsTable> {
    let first = log
        .entries
        .first()
        .ok_or_else(|| Error::InvalidArgument("no probe epochs captured".into()))?;
    let id = |m: &Matrix| estimate_id(m, opts).ok().map(|e| e.id);
    let input_id = id(&first.trace.inputs);
    let mut rows = Vec::new();
    for entry in &log.entries {
        let epoch = entry.epoch;
        let mut push = |layer: String, id: Option<f64>| rows.push(DynamicsRow { epoch, layer, id });
        push("input".into(), input_id);
        for (k, h) in entry.trace.post.iter().enumerate() {
            push(format!("hidden_{}", k + 1), id(h));
        }
        push("output".into(), id(&entry.trace.predictions));
        push("target".into(), Some(id_y));
    }
    Ok(DynamicsTable { rows })
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub record: SweepRecord,
    /// Trained model, absent when the run diverged.
    pub model: Option<MlpModel>,
    pub dynamics: Option<DynamicsTable>,
    pub wall_seconds: f64,
}

/// Trains and measures a single grid cell.
///
/// Divergence is reported in the record; other failures are returned as errors.
pub fn run_cell(
    data: &PreparedData,
    grid: &SweepGrid,
    arch: Architecture,
    weight_decay: f64,
) -> Result<CellOutcome> {
    let start = Instant::now();
    let seed = grid.cell_seed(arch, weight_decay);
    let config = MlpConfig {
        input_dim: data.train.input_dim(),
        hidden_layers: arch.layers,
        hidden_width: arch.width,
        target_dim: data.train.target_dim(),
        seed: seeds::derive(seed, &[INIT_TAG]),
    };
    let model = init_model(&config)?;
    let mut probe_epochs = grid.probe_epochs.clone();
    probe_epochs.push(grid.train.epochs);
    probe_epochs.sort_unstable();
    probe_epochs.dedup();
    let opts = TrainOptions {
        weight_decay,
        shuffle_seed: seeds::derive(seed, &[SHUFFLE_TAG]),
        probe_epochs,
        ..grid.train.clone()
    };

    let mut record = SweepRecord {
        arch,
        weight_decay,
        train_mse: None,
        test_mse: None,
        gap: None,
        nrc1: None,
        id_h: None,
        id_p: None,
        id_y: data.id_y,
        regime: None,
        epochs: opts.epochs,
        diverged: false,
    };
    let (model, log) = match train(&model, &data.train, &opts, &data.probe) {
        Ok(out) => out,
        Err(Error::Divergence { epoch, .. }) => {
            record.diverged = true;
            record.epochs = epoch;
            return Ok(CellOutcome {
                record,
                model: None,
                dynamics: None,
                wall_seconds: start.elapsed().as_secs_f64(),
            });
        }
        Err(e) => return Err(e),
    };

    let train_mse = mse(&model.predict(&data.train.inputs)?, &data.train.targets)?;
    let test_mse = mse(&model.predict(&data.test.inputs)?, &data.test.targets)?;
    let last = &log.entries.last().expect("final epoch is probed").trace;
    let features = last.features();
    record.train_mse = Some(train_mse);
    record.test_mse = Some(test_mse);
    record.gap = Some(test_mse - train_mse);
    record.nrc1 = nrc1(features, data.train.target_dim(), grid.norm_eps)
        .ok()
        .map(|r| r.nrc1);
    record.id_h = estimate_id(features, &grid.id).ok().map(|e| e.id);
    record.id_p = estimate_id(&last.predictions, &grid.id).ok().map(|e| e.id);
    record.regime = match record.id_h {
        Some(h) => Some(classify_regime(h, data.id_y, grid.rel_tol)?),
        None => None,
    };

    let dynamics = if grid.probe_epochs.is_empty() {
        None
    } else {
        let mut probed = log.clone();
        probed
            .entries
            .retain(|e| grid.probe_epochs.contains(&e.epoch));
        Some(layer_id_dynamics(&probed, data.id_y, &grid.id)?)
    };
    Ok(CellOutcome {
        record,
        model: Some(model),
        dynamics,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Records in canonical order, with wall times and dynamics aligned to them.
#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub id_y: f64,
    pub records: Vec<SweepRecord>,
    pub wall_seconds: Vec<f64>,
    pub dynamics: Vec<Option<DynamicsTable>>,
}

/// Trains every cell of the grid, up to `grid.workers` at a time.
pub fn run_sweep(grid: &SweepGrid, dataset: &Dataset) -> Result<SweepOutcome> {
    grid.validate()?;
    let data = PreparedData::new(dataset, grid)?;
    let cells = grid.cells();
    let run = |&(arch, l): &(Architecture, f64)| run_cell(&data, grid, arch, l);

    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<CellOutcome>> = {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(grid.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run).collect())
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<CellOutcome>> = cells.iter().map(run).collect();

    let mut out = SweepOutcome {
        id_y: data.id_y,
        records: Vec::with_capacity(cells.len()),
        wall_seconds: Vec::with_capacity(cells.len()),
        dynamics: Vec::with_capacity(cells.len()),
    };
    for o in outcomes {
        let o = o?;
        out.records.push(o.record);
        out.wall_seconds.push(o.wall_seconds);
        out.dynamics.push(o.dynamics);
    }
    Ok(out)
}
