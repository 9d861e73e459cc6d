use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use regid_core::collapse::{collapse_flag, nrc1, DEFAULT_COLLAPSE_THRESHOLD, DEFAULT_NORM_EPS};
use regid_core::datagen::{gen_manifold_task, read_matrix_csv, Dataset, ManifoldSpec};
use regid_core::experiments::{
    emit_report, format_dynamics_csv, format_summary, format_timings_csv, read_records_csv,
    run_cell, run_sweep, summarize, Architecture, PreparedData, SweepGrid, DYNAMICS_FILE,
    SUMMARY_FILE, TIMINGS_FILE,
};
use regid_core::idest::{decimation_curve, dedupe_points, estimate_id, IdOptions};
use regid_core::mlp::{save_checkpoint, TrainOptions};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "regid",
    version,
    about = "Geometry diagnostics for regression representations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic manifold regression task.
    Gen {
        /// `key: value` file with the task parameters.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the intrinsic dimension of the rows of a CSV matrix.
    EstimateId {
        #[arg(long)]
        data: PathBuf,
        /// Fraction of the largest neighbour ratios dropped before fitting.
        #[arg(long, default_value_t = 0.0)]
        discard: f64,
        /// Comma-separated subsample sizes for a decimation curve.
        #[arg(long, value_delimiter = ',')]
        decimate: Option<Vec<usize>>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute NRC1 of a feature matrix against `n` principal directions.
    Nrc1 {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        n: usize,
    },
    /// Train one model and record per-layer intrinsic dimension.
    Train {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        layers: usize,
        #[arg(long)]
        width: usize,
        #[arg(long, default_value_t = 0.0)]
        wd: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        batch_size: usize,
        /// Comma-separated epochs at which activations are probed (default: first and last).
        #[arg(long, value_delimiter = ',')]
        probe_epochs: Option<Vec<usize>>,
        /// Output directory (default: `<data-dir>/train`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every cell of a grid and write records.csv and summary.txt.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Concurrent runs (overrides the grid file).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Recompute summary.txt from an existing records.csv.
    Report {
        #[arg(long)]
        records: PathBuf,
        /// Output directory (default: next to the records file).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<regid_core::Error>() {
        Some(regid_core::Error::InvalidArgument(_)) => EXIT_USAGE,
        Some(err) if err.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen { spec, out } => gen(&spec, &out),
        Command::EstimateId {
            data,
            discard,
            decimate,
            reps,
            seed,
        } => estimate(&data, discard, decimate, reps, seed),
        Command::Nrc1 { features, n } => {
            let m = read_matrix_csv(&features)?;
            let r = nrc1(&m, n, DEFAULT_NORM_EPS)?;
            println!("nrc1: {}", r.nrc1);
            println!("n_components: {}", r.n_components);
            println!("skipped_points: {}", r.skipped_points);
            println!(
                "collapsed: {}",
                collapse_flag(r.nrc1, DEFAULT_COLLAPSE_THRESHOLD)
            );
            Ok(())
        }
        Command::Train {
            data_dir,
            layers,
            width,
            wd,
            epochs,
            lr,
            seed,
            batch_size,
            probe_epochs,
            out,
        } => {
            let grid = SweepGrid {
                architectures: vec![Architecture { layers, width }],
                weight_decays: vec![wd],
                train: TrainOptions {
                    epochs,
                    batch_size,
                    learning_rate: lr,
                    ..TrainOptions::default()
                },
                seed,
                probe_epochs: probe_epochs.unwrap_or_else(|| vec![0, epochs]),
                ..SweepGrid::default()
            };
            let out = out.unwrap_or_else(|| data_dir.join("train"));
            train_one(&grid, &data_dir, &out)
        }
        Command::Sweep {
            grid,
            data_dir,
            out,
            workers,
        } => {
            let mut grid = SweepGrid::read(&grid)?;
            if let Some(w) = workers {
                grid.workers = w;
            }
            let ds = Dataset::load_dir(&data_dir)?;
            let outcome = run_sweep(&grid, &ds)?;
            emit_report(&outcome.records, &outcome.dynamics, &out)?;
            write(
                &out.join(TIMINGS_FILE),
                &format_timings_csv(&outcome.records, &outcome.wall_seconds),
            )?;
            print!("{}", std::fs::read_to_string(out.join(SUMMARY_FILE))?);
            Ok(())
        }
        Command::Report { records, out } => {
            let recs = read_records_csv(&records)?;
            let text = format_summary(&summarize(&recs, DEFAULT_COLLAPSE_THRESHOLD)?);
            let dir = match out {
                Some(d) => d,
                None => records.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            write(&dir.join(SUMMARY_FILE), &text)?;
            print!("{text}");
            Ok(())
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn gen(spec_path: &Path, out: &Path) -> Result<()> {
    let spec = ManifoldSpec::read(spec_path)?;
    let ds = gen_manifold_task(&spec)?;
    ds.save_dir(out, Some(&spec))?;
    println!(
        "wrote {} rows ({} inputs, {} targets) to {}",
        ds.len(),
        ds.input_dim(),
        ds.target_dim(),
        out.display()
    );
    Ok(())
}

fn estimate(
    data: &Path,
    discard: f64,
    decimate: Option<Vec<usize>>,
    reps: usize,
    seed: u64,
) -> Result<()> {
    let points = read_matrix_csv(data)?;
    let opts = IdOptions {
        discard_fraction: discard,
        seed,
        ..IdOptions::default()
    };
    match decimate {
        None => {
            let (_, removed) = dedupe_points(&points);
            let e = estimate_id(&points, &opts)?;
            println!("id: {}", e.id);
            println!("points: {}", points.rows());
            println!("duplicates_removed: {removed}");
            println!("pairs_used: {}", e.pairs_used);
            println!("discard_fraction: {}", e.discard_fraction);
            println!("fit_rmse: {}", e.fit_rmse);
        }
        Some(sizes) => {
            let curve = decimation_curve(&points, &sizes, reps, seed, &opts)?;
            println!("subsample_size,mean_id,std_id,repetitions");
            for p in curve.points {
                println!(
                    "{},{},{},{}",
                    p.subsample_size, p.mean_id, p.std_id, p.repetitions
                );
            }
        }
    }
    Ok(())
}

fn train_one(grid: &SweepGrid, data_dir: &Path, out: &Path) -> Result<()> {
    grid.validate()?;
    let ds = Dataset::load_dir(data_dir)?;
    let data = PreparedData::new(&ds, grid)?;
    let arch = grid.architectures[0];
    let wd = grid.weight_decays[0];
    let cell = run_cell(&data, grid, arch, wd)?;
    let r = &cell.record;
    let Some(model) = &cell.model else {
        return Err(regid_core::Error::Divergence {
            epoch: r.epochs,
            loss: f64::NAN,
        })
        .context(format!("training {arch} with weight decay {wd}"));
    };
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let ckpt = out.join("model.bin");
    save_checkpoint(
        model,
        &ckpt,
        &[
            ("weight_decay", wd.to_string()),
            ("epochs", r.epochs.to_string()),
            ("learning_rate", grid.train.learning_rate.to_string()),
            ("batch_size", grid.train.batch_size.to_string()),
            ("init", "uniform fan-in, zero biases".to_string()),
        ],
    )?;
    if cell.dynamics.is_some() {
        write(
            &out.join(DYNAMICS_FILE),
            &format_dynamics_csv(
                std::slice::from_ref(r),
                std::slice::from_ref(&cell.dynamics),
            ),
        )?;
    }
    let na = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    println!("arch: {arch}");
    println!("weight_decay: {wd}");
    println!("train_mse: {}", na(r.train_mse));
    println!("test_mse: {}", na(r.test_mse));
    println!("nrc1: {}", na(r.nrc1));
    println!("id_h: {}", na(r.id_h));
    println!("id_p: {}", na(r.id_p));
    println!("id_y: {}", r.id_y);
    println!(
        "regime: {}",
        r.regime.map_or("NA".to_string(), |l| l.to_string())
    );
    println!("checkpoint: {}", ckpt.display());
    Ok(())
}
