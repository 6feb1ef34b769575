use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clap::Parser;
use gsapool_cli::{ablation_cells, parse_config, Axis, Cli, Command as Sub, Flags, RunSpec};
use gsapool_core::dataset::{synthetic_motif_dataset, write_tu_dataset};
use gsapool_core::{FusionKind, ModelConfig, ParameterSet, ScorerKernel};

fn gsapool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsapool"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn flags(args: &[&str]) -> Flags {
    let cli = Cli::try_parse_from(["gsapool", "train"].iter().chain(args)).unwrap();
    match cli.command {
        Sub::Train(f) => f,
        _ => unreachable!(),
    }
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(
        &conf,
        "# sweep base\nratio = 0.25\nfusion_hops = 3\nepochs = 7\nsbtl = sage\n",
    )
    .unwrap();
    let c = conf.to_str().unwrap();

    let spec = RunSpec::resolve(&flags(&["--config", c, "--epochs", "9"])).unwrap();
    assert_eq!(spec.train.epochs, 9);
    assert_eq!(spec.model.pool.ratio, 0.25);
    assert_eq!(spec.model.pool.fusion_hops, 3);
    assert_eq!(spec.model.pool.sbtl, ScorerKernel::Sage);
    assert_eq!(spec.model.pool.fusion, FusionKind::Gat);
    assert_eq!(spec.train.lr, 5e-4);

    let defaults = RunSpec::resolve(&flags(&[])).unwrap();
    assert_eq!(defaults.model, ModelConfig::default());
    assert_eq!(
        (
            defaults.train.epochs,
            defaults.train.batch_size,
            defaults.train.folds
        ),
        (300, 32, 10)
    );
}

#[test]
fn alpha_default_depends_on_dataset() {
    assert_eq!(
        RunSpec::resolve(&flags(&["--dataset", "DD"]))
            .unwrap()
            .model
            .pool
            .alpha,
        0.6
    );
    assert_eq!(
        RunSpec::resolve(&flags(&["--dataset", "NCI1"]))
            .unwrap()
            .model
            .pool
            .alpha,
        0.4
    );
    assert_eq!(
        RunSpec::resolve(&flags(&["--dataset", "dd", "--alpha", "0.2"]))
            .unwrap()
            .model
            .pool
            .alpha,
        0.2
    );
}

#[test]
fn config_echo_resolves_to_the_same_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = RunSpec::resolve(&flags(&[
        "--dataset",
        "synthetic:50",
        "--ratio",
        "0.75",
        "--fusion",
        "gcn",
        "--seed",
        "3",
    ]))
    .unwrap();
    let conf = dir.path().join("echo.conf");
    fs::write(&conf, spec.to_config()).unwrap();
    let again = RunSpec::resolve(&flags(&["--config", conf.to_str().unwrap()])).unwrap();
    assert_eq!(again, spec);
}

#[test]
fn bad_config_is_rejected() {
    assert!(parse_config("ratio 0.5").is_err());
    assert!(parse_config("hidden = 4").is_err());
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "ratio = lots\n").unwrap();
    assert!(RunSpec::resolve(&flags(&["--config", conf.to_str().unwrap()])).is_err());
    assert!(RunSpec::resolve(&flags(&["--ratio", "1.5"])).is_err());
}

#[test]
fn scorer_axis_matches_kernel_table() {
    let cells = ablation_cells(Axis::Scorer, &ModelConfig::default());
    let got: Vec<(String, ScorerKernel, f64)> = cells
        .iter()
        .map(|(l, m)| (l.clone(), m.pool.sbtl, m.pool.alpha))
        .collect();
    let want = [
        ("scorer_sage", ScorerKernel::Sage, 1.0),
        ("scorer_gat", ScorerKernel::Gat, 1.0),
        ("scorer_gcn", ScorerKernel::Gcn, 1.0),
        ("scorer_cheb", ScorerKernel::Cheb, 1.0),
        ("scorer_mlp", ScorerKernel::Gcn, 0.0),
        ("scorer_gcn+mlp", ScorerKernel::Gcn, 0.4),
    ];
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        assert_eq!((g.0.as_str(), g.1, g.2), w);
    }
    assert_eq!(
        ablation_cells(Axis::Ratio, &ModelConfig::default()).len(),
        3
    );
    assert_eq!(
        ablation_cells(Axis::Fusion, &ModelConfig::default()).len(),
        3
    );
}

const QUICK: [&str; 8] = [
    "--dataset",
    "synthetic:24",
    "--epochs",
    "1",
    "--folds",
    "2",
    "--batch-size",
    "8",
];

fn run_ok(args: &[&str]) -> Output {
    let out = gsapool(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn ablate_alpha_writes_six_metrics_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["ablate", "--axis", "alpha", "--out-dir", out];
    args.extend(QUICK);
    run_ok(&args);
    let mut alphas = Vec::new();
    for a in ["0", "0.2", "0.4", "0.6", "0.8", "1"] {
        let text = fs::read_to_string(dir.path().join(format!("ablate_alpha_{a}.json"))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        alphas.push(v["model"]["pool"]["alpha"].as_f64().unwrap());
    }
    assert_eq!(alphas, [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
    let json = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "json")
        })
        .count();
    assert_eq!(json, 6);
}

#[test]
fn identical_runs_write_identical_metrics() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let mut args = vec![
            "train",
            "--out-dir",
            d.path().to_str().unwrap(),
            "--seed",
            "5",
        ];
        args.extend(QUICK);
        run_ok(&args);
    }
    let read = |d: &Path| fs::read(d.join("metrics.json")).unwrap();
    assert_eq!(read(dirs[0].path()), read(dirs[1].path()));
}

#[test]
fn export_embeddings_writes_csv_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "export-embeddings",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ];
    args.extend(QUICK);
    run_ok(&args);
    let csv = fs::read_to_string(dir.path().join("embeddings.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 25);
    assert_eq!(lines[1].split(',').count(), 2 + 256);
    let ckpt = fs::read(dir.path().join("model.ckpt")).unwrap();
    assert_eq!(&ckpt[..4], b"GSAP");
    assert!(!ParameterSet::read_checkpoint(ckpt.as_slice())
        .unwrap()
        .is_empty());
}

#[test]
fn stats_reads_tu_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut d = synthetic_motif_dataset(20, 1).unwrap();
    d.name = "MOTIF".into();
    write_tu_dataset(dir.path(), &d).unwrap();
    let out = run_ok(&[
        "stats",
        "--dataset",
        "MOTIF",
        "--data-dir",
        dir.path().to_str().unwrap(),
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("graphs=20"), "{text}");
}

#[test]
fn gradcheck_passes() {
    let out = run_ok(&["gradcheck"]);
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("all 23 gradient checks passed"));
}

#[test]
fn usage_errors_exit_nonzero() {
    let bad_flag = gsapool(&["train", "--bogus", "1"]);
    assert!(!bad_flag.status.success());
    assert!(String::from_utf8_lossy(&bad_flag.stderr).contains("Usage"));
    assert!(!gsapool(&["stats", "--dataset", "NOPE"]).status.success());
    assert!(!gsapool(&["frobnicate"]).status.success());
    assert!(!gsapool(&["ablate", "--dataset", "synthetic:20"])
        .status
        .success());
    assert!(!gsapool(&["train", "--sbtl", "transformer"])
        .status
        .success());
}
