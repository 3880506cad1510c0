//! End-to-end tests of the `dualmark` binary: every subcommand, the file
//! contracts between them, determinism of reruns, and failure exits.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dualmark::io::{parse_scenario_config, read_score_csv};
use dualmark::SimScenario;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dualmark"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn dualmark")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn assert_fails(out: &Output, needle: &str) {
    assert!(!out.status.success(), "expected failure");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(needle), "stderr missing {needle:?}: {err}");
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

/// Simulate one small replicate and return the history file path.
fn simulated_history(dir: &Path) -> PathBuf {
    let cfg = configs_dir().join("sim1.cfg");
    let out = run(&[
        "simulate",
        "--scenario",
        cfg.to_str().unwrap(),
        "--seed",
        "11",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_ok(&out);
    dir.join("rep_000.hist")
}

fn fit(data: &Path, model: &str, seed: &str, out_dir: &Path) -> Output {
    run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--model",
        model,
        "--chains",
        "2",
        "--burnin",
        "60",
        "--iters",
        "120",
        "--thin",
        "2",
        "--seed",
        seed,
        "--out",
        out_dir.to_str().unwrap(),
    ])
}

#[test]
fn fit_writes_outputs_and_reruns_identically() {
    let tmp = TempDir::new().unwrap();
    let hist = simulated_history(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_ok(&fit(&hist, "two-sided", "5", &a));
    assert_ok(&fit(&hist, "two-sided", "5", &b));
    for name in ["chain_1.csv", "chain_2.csv", "summary.csv", "manifest.json"] {
        assert!(a.join(name).exists(), "missing {name}");
    }
    for name in ["chain_1.csv", "chain_2.csv", "summary.csv"] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name} differs");
    }
    let manifest = read(&a.join("manifest.json"));
    assert!(manifest.contains("\"command\": \"fit\""));
    assert!(manifest.contains("\"seed\": 5"));
    assert!(manifest.contains("\"sha256\""));
    let header = read(&a.join("chain_1.csv")).lines().next().unwrap().to_string();
    for col in ["phi_1", "p_1", "gamma_1", "lambda_1", "mu_phi", "N", "logpost"] {
        assert!(header.split(',').any(|c| c == col), "missing column {col}");
    }
}

#[test]
fn fit_seed_changes_chains() {
    let tmp = TempDir::new().unwrap();
    let hist = simulated_history(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_ok(&fit(&hist, "two-sided", "5", &a));
    assert_ok(&fit(&hist, "two-sided", "6", &b));
    assert_ne!(read(&a.join("chain_1.csv")), read(&b.join("chain_1.csv")));
}

#[test]
fn combined_fit_keeps_only_shared_parameters() {
    let tmp = TempDir::new().unwrap();
    let hist = simulated_history(tmp.path());
    let out = tmp.path().join("c");
    assert_ok(&fit(&hist, "combined", "5", &out));
    let header = read(&out.join("chain_1.csv")).lines().next().unwrap().to_string();
    let cols: Vec<&str> = header.split(',').collect();
    assert!(cols.contains(&"phi_1") && cols.contains(&"mu_phi"));
    assert!(!cols.contains(&"N"), "combined chains must drop N");
    assert!(!cols.contains(&"logpost"), "combined chains must drop logpost");

    let one = tmp.path().join("l");
    assert_ok(&fit(&hist, "one-sided-left", "5", &one));
    let header = read(&one.join("chain_1.csv")).lines().next().unwrap().to_string();
    assert!(header.split(',').any(|c| c == "N"));
}

#[test]
fn fit_rejects_wrong_t_and_missing_file() {
    let tmp = TempDir::new().unwrap();
    let hist = simulated_history(tmp.path());
    let out = run(&[
        "fit",
        "--data",
        hist.to_str().unwrap(),
        "--model",
        "two-sided",
        "--t",
        "7",
    ]);
    assert_fails(&out, "history file has T = 10, config expects T = 7");
    let out = fit(Path::new("no_such.hist"), "two-sided", "1", tmp.path());
    assert!(!out.status.success());
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs_dir().join("sim2.cfg");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = run(&[
            "simulate",
            "--scenario",
            cfg.to_str().unwrap(),
            "--replicates",
            "2",
            "--seed",
            "3",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_ok(&out);
    }
    for name in ["rep_000.hist", "rep_000.truth.csv", "rep_001.hist", "rep_001.truth.csv"] {
        assert!(a.join(name).exists(), "missing {name}");
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name} differs");
    }
    assert_ne!(read(&a.join("rep_000.hist")), read(&a.join("rep_001.hist")));
    assert!(read(&a.join("manifest.json")).contains("\"command\": \"simulate\""));
}

#[test]
fn score_pipeline_with_reference_yields_unit_relative_mse() {
    let tmp = TempDir::new().unwrap();
    let sim_dir = tmp.path().join("sim");
    std::fs::create_dir_all(&sim_dir).unwrap();
    let cfg = configs_dir().join("sim1.cfg");
    let out = run(&[
        "simulate",
        "--scenario",
        cfg.to_str().unwrap(),
        "--replicates",
        "2",
        "--seed",
        "11",
        "--out",
        sim_dir.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let fits = tmp.path().join("fits");
    for rep in ["rep_000", "rep_001"] {
        let out = fit(
            &sim_dir.join(format!("{rep}.hist")),
            "one-sided-left",
            "9",
            &fits.join(rep),
        );
        assert_ok(&out);
    }
    let scored = tmp.path().join("scored");
    let out = run(&[
        "score",
        "--truth-dir",
        sim_dir.to_str().unwrap(),
        "--summary-dir",
        fits.to_str().unwrap(),
        "--reference-dir",
        fits.to_str().unwrap(),
        "--out",
        scored.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let (score, relative) = read_score_csv::<f64>(scored.join("score.csv")).unwrap();
    let relative = relative.expect("relative column");
    for r in relative {
        assert!((r - 1.0).abs() < 1e-12, "self-relative MSE should be 1, got {r}");
    }
    assert_eq!(score.phi.n, 18, "2 replicates x 9 intervals");
    assert!(read(&scored.join("manifest.json")).contains("\"command\": \"score\""));
}

#[test]
fn score_rejects_mismatched_replicates() {
    let tmp = TempDir::new().unwrap();
    let sim_dir = tmp.path().join("sim");
    std::fs::create_dir_all(&sim_dir).unwrap();
    let cfg = configs_dir().join("sim1.cfg");
    let out = run(&[
        "simulate",
        "--scenario",
        cfg.to_str().unwrap(),
        "--replicates",
        "2",
        "--seed",
        "11",
        "--out",
        sim_dir.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let fits = tmp.path().join("fits");
    let out = fit(&sim_dir.join("rep_000.hist"), "one-sided-left", "9", &fits.join("rep_000"));
    assert_ok(&out);
    let out = run(&[
        "score",
        "--truth-dir",
        sim_dir.to_str().unwrap(),
        "--summary-dir",
        fits.to_str().unwrap(),
    ]);
    assert_fails(&out, "replicate mismatch");
}

fn write_chain(path: &Path, shift: f64) -> PathBuf {
    let mut text = String::from("sweep,a,b\n");
    for i in 0..200 {
        let wiggle = if i % 2 == 0 { 0.1 } else { -0.1 };
        text.push_str(&format!("{i},{},{}\n", shift + wiggle, 1.0 - wiggle));
    }
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

#[test]
fn diagnose_passes_matching_chains_and_flags_split_ones() {
    let tmp = TempDir::new().unwrap();
    let c1 = write_chain(&tmp.path().join("c1.csv"), 0.0);
    let c2 = write_chain(&tmp.path().join("c2.csv"), 0.0);
    let out = run(&["diagnose", c1.to_str().unwrap(), c2.to_str().unwrap()]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("parameter,psrf,psrf_degenerate,mcse,ess"));

    let c3 = write_chain(&tmp.path().join("c3.csv"), 5.0);
    let out = run(&["diagnose", c1.to_str().unwrap(), c3.to_str().unwrap()]);
    assert_fails(&out, "potential scale reduction above 1.02");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("a ("), "offender list should name column a: {err}");
    assert!(!err.contains("b ("), "column b matches and should not be listed: {err}");
}

#[test]
fn diagnose_single_chain_warns_and_reports_mc_error() {
    let tmp = TempDir::new().unwrap();
    let c1 = write_chain(&tmp.path().join("c1.csv"), 0.0);
    let out = run(&["diagnose", c1.to_str().unwrap()]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("parameter,mcse,ess"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("needs at least two chains"));
}

#[test]
fn diagnose_rejects_malformed_chain_file() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.csv");
    std::fs::write(&path, "sweep,a,b\n0,1.0,2.0\n1,1.0,oops\n").unwrap();
    let out = run(&["diagnose", path.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn shipped_scenario_configs_match_builtin_studies() {
    let one: SimScenario = parse_scenario_config(configs_dir().join("sim1.cfg")).unwrap();
    assert_eq!(one, SimScenario::study_one());
    let two: SimScenario = parse_scenario_config(configs_dir().join("sim2.cfg")).unwrap();
    assert_eq!(two, SimScenario::study_two());
}
