use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_smc-mdp"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("examples/configs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("the binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ledger_verb_writes_the_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ledger");
    let o = run(&[
        "ledger",
        "--config",
        path(&config("coin2.toml")),
        "--out",
        path(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("V_1 = 0.265427"));
    let ledger: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("ledger.json")).unwrap()).unwrap();
    let text = ledger.to_string();
    assert!(text.contains("\"kappa\":0.425"), "{text}");
    assert!(text.contains("\"test_function\":\"indicator1\""));
    assert!(out.join("manifest.json").exists());
    assert!(!out.join("results.csv").exists());
}

#[test]
fn check_verb_is_fast_and_passes() {
    let start = Instant::now();
    let o = run(&["check"]);
    assert!(start.elapsed() < Duration::from_secs(5));
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(
        text.lines().filter(|l| l.starts_with("PASS")).count(),
        5,
        "{text}"
    );
    assert!(!text.contains("FAIL"));
}

#[test]
fn invalid_invocations_exit_with_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["run"]).status.code(), Some(1));
    let o = run(&["validate-config", "--config", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&[
        "validate-config",
        "--config",
        path(&config("coin2.toml")),
        "--set",
        "alpha=0.9",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn validate_config_echoes_defaults_and_overrides() {
    let o = run(&[
        "validate-config",
        "--config",
        path(&config("coin2.toml")),
        "--set",
        "replications=17",
        "--seed",
        "99",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("replications = 17"), "{text}");
    assert!(text.contains("seed = 99"));
    assert!(text.contains("target_hits = 50"));
}

#[test]
fn list_models_names_the_builtins() {
    let text = stdout(&run(&["list-models"]));
    for name in [
        "coin2",
        "linear_gaussian",
        "stoch_vol",
        "indicator1",
        "square",
    ] {
        assert!(text.contains(name), "{name} missing from {text}");
    }
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&[
        "run",
        "--config",
        path(&config("coin2.toml")),
        "--out",
        path(&out),
        "--set",
        "replications=300",
        "--set",
        "n_schedule=[100, 300]",
        "--workers",
        "2",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for f in [
        "manifest.json",
        "ledger.json",
        "results.csv",
        "rate_vs_n.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(results.starts_with("experiment,N,metric,value,ci_low,ci_high"));
    assert!(results.contains("mdp,300,p_hat"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["replications"], 300);
}

#[test]
fn failed_run_leaves_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("failed");
    // the threshold is far beyond anything R = 50 replications can reach
    let o = run(&[
        "run",
        "--config",
        path(&config("coin2.toml")),
        "--out",
        path(&out),
        "--set",
        "replications=50",
        "--set",
        "experiments=[\"mdp\"]",
        "--set",
        "deviation.delta=3.0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("estimability"));
    assert!(!out.exists());

    // a pre-existing directory survives, but the run's files do not
    let kept = dir.path().join("kept");
    std::fs::create_dir(&kept).unwrap();
    std::fs::write(kept.join("notes.txt"), "mine").unwrap();
    let o = run(&[
        "run",
        "--config",
        path(&config("coin2.toml")),
        "--out",
        path(&kept),
        "--set",
        "replications=50",
        "--set",
        "experiments=[\"truncation\"]",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(kept.join("notes.txt").exists());
    assert!(!kept.join("manifest.json").exists());
}

#[test]
fn in_process_entry_point_matches_the_binary() {
    assert_eq!(smc_mdp::cli::run(["smc-mdp", "check"]), 0);
    assert_eq!(smc_mdp::cli::run(["smc-mdp", "nope"]), 1);
}
