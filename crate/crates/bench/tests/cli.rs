use std::fs;
use std::path::Path;
use std::process::Command;

use tenips::io::{load_mask, load_tensor};
use tenips_bench::config::{ExperimentConfig, Preset};
use tenips_bench::experiment::run_experiment;

fn tenips_cmd(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_tenips"))
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "tenips {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_fig2() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(Preset::Fig2);
    cfg.size = 8;
    cfg.rank = 2;
    cfg.target_ranks = vec![2];
    cfg.ratios = vec![0.5, 1.0];
    cfg.seeds = vec![0, 1];
    cfg
}

#[test]
fn repeated_runs_write_identical_metrics() {
    let cfg = small_fig2();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&cfg).unwrap().write(a.path()).unwrap();
    run_experiment(&cfg).unwrap().write(b.path()).unwrap();
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    for f in ["metrics.csv", "summary.json", "config.json"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs");
    }
    for f in ["timings.csv", "solves.json"] {
        assert!(a.path().join(f).exists());
    }
}

#[test]
fn full_observation_of_exact_low_rank_data_is_recovered_by_every_method() {
    let mut cfg = small_fig2();
    cfg.noise = 0.0;
    cfg.ratios = vec![1.0];
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.metrics.len(), 2 * 4);
    for r in &out.metrics {
        let e = r.completion_rel_error.unwrap();
        assert!(e <= 1e-6, "{} seed {}: {e}", r.method, r.seed);
    }
}

#[test]
fn generate_estimate_and_complete_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let out_dir = dir.path().to_str().unwrap();
    tenips_cmd(&[
        "gen",
        "--preset",
        "table2",
        "--scale",
        "8",
        "--seed",
        "3",
        "--out-dir",
        out_dir,
    ]);
    let b = load_tensor(d("b.tnsr")).unwrap();
    let mask = load_mask(d("mask.mask")).unwrap();
    assert_eq!(b.dims(), &[8, 8, 8, 8]);
    assert_eq!(mask.shape(), b.shape());
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d("instance.json")).unwrap()).unwrap();
    let theta = meta["theta"].as_f64().unwrap().to_string();
    let alpha = meta["alpha"].as_f64().unwrap().to_string();

    let est_dir = d("est");
    let stdout = tenips_cmd(&[
        "estimate",
        "--mask",
        &d("mask.mask"),
        "--tau",
        &theta,
        "--gamma",
        &alpha,
        "--truth",
        &d("p.tnsr"),
        "--out-dir",
        &est_dir,
    ]);
    assert!(stdout.contains("propensity relative error"));
    let p_hat = load_tensor(dir.path().join("est/p_hat.tnsr")).unwrap();
    assert!(p_hat.data().iter().all(|&q| q > 0.0 && q < 1.0));

    let fin_dir = d("fin");
    tenips_cmd(&[
        "complete",
        "--data",
        &d("b_obs.tnsr"),
        "--mask",
        &d("mask.mask"),
        "--propensity",
        &d("est/p_hat.tnsr"),
        "--method",
        "tenips",
        "--ranks",
        "5",
        "--truth",
        &d("b.tnsr"),
        "--out-dir",
        &fin_dir,
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fin/completion.json")).unwrap())
            .unwrap();
    let err = report["completion_rel_error"].as_f64().unwrap();
    assert!(err.is_finite() && err > 0.0 && err < 1.0, "{err}");
    assert_eq!(
        load_tensor(dir.path().join("fin/estimate.tnsr"))
            .unwrap()
            .dims(),
        b.dims()
    );
}

#[test]
fn experiment_command_reads_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    fs::write(
        &cfg_path,
        "# small uniform-missingness run\npreset = \"fig2\"\nsize = 8\nrank = 2\ntarget_ranks = [2]\nratios = [0.6]\nseeds = [4]\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let stdout = tenips_cmd(&[
        "experiment",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("4 rows (0 failed)"), "{stdout}");
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(!csv.contains("seconds"));
}

#[test]
fn bad_arguments_are_reported() {
    let out = Command::new(env!("CARGO_BIN_EXE_tenips"))
        .args(["experiment", "--preset", "nope"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.cfg");
    fs::write(&cfg_path, "sizes = 8\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tenips"))
        .args(["experiment", "--config", cfg_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
