use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use lowrex::xcli::{self, RunConfig};

fn lowrex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lowrex")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run_in(dir: &Path, exp: &str, cfg: &Path, extra: &[&str]) -> Output {
    let mut args = vec![exp, "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    lowrex(&args)
}

const NOISE: &str = "experiment = \"noise-robustness\"\ntrials = 3\nmaster_seed = 5\n\
                     noise_levels = [0.0, 1e-3]\ndimensions = { n = 32, p = 16, k = 2 }\n";

#[test]
fn writes_csv_curves_and_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", NOISE);
    let out = run_in(tmp.path(), "noise-robustness", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(tmp.path().join("noise-robustness.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..3], &["trial", "seed", "control"]);
    let body: Vec<&str> = lines.collect();
    assert!(!body.is_empty());
    let error_col = header.iter().position(|h| *h == "error").unwrap();
    for line in &body {
        let cell = line.split(',').nth(error_col).unwrap();
        assert!(cell.contains('e') && cell.parse::<f64>().is_ok(), "{cell} is not {{:.16e}}");
        let mantissa = cell.split('e').next().unwrap();
        assert_eq!(mantissa.split('.').nth(1).unwrap().len(), 16, "{cell}");
    }
    assert!(tmp.path().join("noise-robustness.curves.csv").exists());

    let meta: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("noise-robustness.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["experiment"], "noise-robustness");
    assert_eq!(meta["master_seed"], 5);
    assert_eq!(meta["failures"].as_array().unwrap().len(), 0);
    let seeds = meta["trial_seeds"].as_array().unwrap();
    assert_eq!(seeds.len(), 3);
    assert!(meta["summary"]["slope_identifiable"]["slope"].is_number());
    let roundtrip: RunConfig = serde_json::from_value(meta["config"].clone()).unwrap();
    assert_eq!(RunConfig::from_toml(&roundtrip.to_toml()).unwrap(), RunConfig::from_toml(NOISE).unwrap());
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", NOISE);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert_eq!(run_in(&a, "noise-robustness", &cfg, &["--seed", "5"]).status.code(), Some(0));
    assert_eq!(run_in(&b, "noise-robustness", &cfg, &[]).status.code(), Some(0));
    assert_eq!(run_in(&c, "noise-robustness", &cfg, &["--seed", "6"]).status.code(), Some(0));
    let read = |d: &Path| std::fs::read(d.join("noise-robustness.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let meta: Value = serde_json::from_slice(&std::fs::read(c.join("noise-robustness.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["master_seed"], 6);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("absent.toml");
    assert_eq!(run_in(tmp.path(), "noise-robustness", &missing, &[]).status.code(), Some(2));

    let bad = write_config(tmp.path(), "bad.toml", "experiment = \"noise-robustness\"\ntrials = \"many\"\n");
    assert_eq!(run_in(tmp.path(), "noise-robustness", &bad, &[]).status.code(), Some(2));

    let unknown = write_config(tmp.path(), "unknown.toml", &format!("{NOISE}options = {{ bogus = 1 }}\n"));
    assert_eq!(run_in(tmp.path(), "noise-robustness", &unknown, &[]).status.code(), Some(2));

    let cfg = write_config(tmp.path(), "c.toml", NOISE);
    let out = run_in(tmp.path(), "sure-curve", &cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));

    assert_eq!(run_in(tmp.path(), "noise-robustness", &cfg, &["--jobs", "0"]).status.code(), Some(2));
    assert_eq!(lowrex(&["no-such-experiment", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(lowrex(&["noise-robustness"]).status.code(), Some(2));

    let k_too_big = write_config(
        tmp.path(),
        "k.toml",
        "experiment = \"noise-robustness\"\ntrials = 1\nnoise_levels = [0.0]\ndimensions = { n = 4, p = 4, k = 9 }\n",
    );
    assert_eq!(run_in(tmp.path(), "noise-robustness", &k_too_big, &[]).status.code(), Some(2));
}

#[test]
fn partial_failures_exit_3_and_are_listed() {
    let tmp = tempfile::tempdir().unwrap();
    // One screening attempt at P = 6 rarely yields an identifiable 4-sparse instance.
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "experiment = \"noise-robustness\"\ntrials = 8\nmaster_seed = 1\nnoise_levels = [0.0]\n\
         dimensions = { n = 64, p = 6, k = 4 }\noptions = { max_attempts = 1, controls = false }\n",
    );
    let out = run_in(tmp.path(), "noise-robustness", &cfg, &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let meta: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("noise-robustness.meta.json")).unwrap()).unwrap();
    let failures = meta["failures"].as_array().unwrap();
    assert!(!failures.is_empty());
    for f in failures {
        assert!(f["trial"].is_u64() && f["seed"].is_u64() && f["error"].is_string());
    }
    let csv = std::fs::read_to_string(tmp.path().join("noise-robustness.csv")).unwrap();
    assert_eq!(csv.lines().count() - 1 + failures.len(), 8);
}

#[test]
fn zero_trials_write_header_only() {
    let tmp = tempfile::tempdir().unwrap();
    for exp in ["identifiability-sweep", "noise-robustness", "model-identification", "consistency-sweep", "sure-curve", "fb-trace"] {
        let body = match exp {
            "identifiability-sweep" => "dimensions = { n = 10, k_grid = [1], p_grid = [5] }\n",
            "consistency-sweep" => "dimensions = { n = 10, k = 2, p_grid = [20] }\n",
            "sure-curve" => "noise_levels = [0.1]\ndimensions = { n = 8, p = 8, k = 2 }\nlambda_rule = { rule = \"grid\", values = [0.1] }\n",
            "fb-trace" => "noise_levels = [0.01]\ndimensions = { n = 8, p = 8, k = 2 }\nlambda_rule = { rule = \"fixed\", value = 0.1 }\n",
            _ => "noise_levels = [0.0]\ndimensions = { n = 8, p = 8, k = 2 }\noptions = { controls = false }\n",
        };
        let cfg = write_config(tmp.path(), &format!("{exp}.toml"), &format!("experiment = \"{exp}\"\ntrials = 0\n{body}"));
        let out = run_in(tmp.path(), exp, &cfg, &[]);
        assert_eq!(out.status.code(), Some(0), "{exp}: {}", String::from_utf8_lossy(&out.stderr));
        let csv = std::fs::read_to_string(tmp.path().join(format!("{exp}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 1, "{exp}: {csv}");
        assert!(csv.starts_with("trial,seed"), "{exp}: {csv}");
    }
}

#[test]
fn replayed_trial_matches_full_run() {
    let cfg = RunConfig::from_toml(NOISE).unwrap();
    let full = xcli::run(&cfg).unwrap();
    let trial_col = full.table.column("trial").unwrap();
    for trial in [0usize, 1, 2] {
        let expected: Vec<_> = full
            .table
            .rows
            .iter()
            .filter(|r| r[trial_col].as_f64() == Some(trial as f64))
            .cloned()
            .collect();
        assert!(!expected.is_empty());
        assert_eq!(xcli::replay_trial(&cfg, trial).unwrap().rows, expected, "trial {trial}");
    }
    assert!(xcli::replay_trial(&cfg, 99).is_err());
}

#[test]
fn output_directory_falls_back_to_config() {
    let tmp = tempfile::tempdir().unwrap();
    let target = tmp.path().join("from-config");
    let body = format!("{NOISE}output = {:?}\n", target.to_str().unwrap());
    let cfg = write_config(tmp.path(), "c.toml", &body);
    let out = lowrex(&["noise-robustness", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(target.join("noise-robustness.meta.json").exists());
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 6);
}
