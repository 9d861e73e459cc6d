use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use regid_core::mlp::load_checkpoint;

fn regid(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regid"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn generate(dir: &Path, samples: usize) {
    fs::write(
        dir.join("spec.txt"),
        format!(
            "latent_dim: 2\ninput_dim: 8\ntarget_dim: 2\nsamples: {samples}\ntarget_noise_sigma: 0.05\nseed: 11\n"
        ),
    )
    .unwrap();
    let out = regid(&["gen", "--spec", "spec.txt", "--out", "data"], dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), 600);
    let out = regid(&["estimate-id", "--data", "data/inputs.csv"], dir.path());
    assert_eq!(code(&out), 0);
    let id: f64 = stdout(&out)
        .lines()
        .find_map(|l| l.strip_prefix("id: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((id - 2.0).abs() < 0.5, "{id}");

    let out = regid(
        &[
            "estimate-id",
            "--data",
            "data/targets.csv",
            "--decimate",
            "100,600",
            "--reps",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().count(), 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&regid(&[], p)), 1);
    assert_eq!(code(&regid(&["frobnicate"], p)), 1);
    assert_eq!(code(&regid(&["nrc1", "--features", "x.csv"], p)), 1);
    assert_eq!(code(&regid(&["--help"], p)), 0);
    assert_eq!(
        code(&regid(&["estimate-id", "--data", "missing.csv"], p)),
        2
    );

    fs::write(p.join("ragged.csv"), "1,2\n3\n").unwrap();
    assert_eq!(code(&regid(&["estimate-id", "--data", "ragged.csv"], p)), 2);

    let constant = "1,2,3\n".repeat(20);
    fs::write(p.join("const.csv"), constant).unwrap();
    assert_eq!(
        code(&regid(&["nrc1", "--features", "const.csv", "--n", "1"], p)),
        3
    );

    generate(p, 200);
    let out = regid(
        &[
            "estimate-id",
            "--data",
            "data/inputs.csv",
            "--discard",
            "1.5",
        ],
        p,
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn nrc1_prints_result() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..30)
        .map(|i| {
            let t = i as f64;
            format!("{},{},{}\n", t, 2.0 * t, -t)
        })
        .collect();
    fs::write(dir.path().join("f.csv"), rows).unwrap();
    let out = regid(&["nrc1", "--features", "f.csv", "--n", "1"], dir.path());
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let v: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("nrc1: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(v < 1e-10, "{v}");
    assert!(text.contains("collapsed: true"));
}

#[test]
fn train_writes_checkpoint_and_dynamics() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    generate(p, 300);
    let out = regid(
        &[
            "train",
            "--data-dir",
            "data",
            "--layers",
            "2",
            "--width",
            "8",
            "--wd",
            "1e-3",
            "--epochs",
            "10",
            "--seed",
            "4",
            "--probe-epochs",
            "0,5,10",
            "--out",
            "run",
        ],
        p,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let model = load_checkpoint(&p.join("run/model.bin")).unwrap();
    assert_eq!(model.config.hidden_layers, 2);
    let dynamics = fs::read_to_string(p.join("run/dynamics.csv")).unwrap();
    assert_eq!(dynamics.lines().count(), 1 + 3 * 5);

    let out = regid(
        &[
            "train",
            "--data-dir",
            "data",
            "--layers",
            "1",
            "--width",
            "8",
            "--epochs",
            "20",
            "--lr",
            "500",
            "--out",
            "bad",
        ],
        p,
    );
    assert_eq!(code(&out), 3);
}

#[test]
fn sweep_is_reproducible_and_report_matches() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    generate(p, 300);
    fs::write(
        p.join("grid.txt"),
        "architectures: 1x8, 2x8\nweight_decays: 0, 1e-2\nepochs: 8\nbatch_size: 32\nseed: 9\nprobe_size: 100\n",
    )
    .unwrap();
    for (out_dir, workers) in [("a", "1"), ("b", "2")] {
        let out = regid(
            &[
                "sweep",
                "--grid",
                "grid.txt",
                "--data-dir",
                "data",
                "--out",
                out_dir,
                "--workers",
                workers,
            ],
            p,
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(p.join("a/records.csv")).unwrap();
    assert_eq!(a, fs::read(p.join("b/records.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 5);

    let out = regid(&["report", "--records", "a/records.csv", "--out", "r"], p);
    assert_eq!(code(&out), 0);
    assert_eq!(
        fs::read(p.join("r/summary.txt")).unwrap(),
        fs::read(p.join("a/summary.txt")).unwrap()
    );

    fs::write(p.join("bad_grid.txt"), "architecture: 1x8\n").unwrap();
    let out = regid(
        &[
            "sweep",
            "--grid",
            "bad_grid.txt",
            "--data-dir",
            "data",
            "--out",
            "c",
        ],
        p,
    );
    assert_eq!(code(&out), 2);
}
