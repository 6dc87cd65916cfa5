use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn wealthsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wealthsim")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

const SMALL_EPS: &str = r#"
experiment = "eps_infinity"
seed = 3
trials = 4000
[model]
lambda = 0.5
[eps]
max_order = 4
"#;

const SMALL_DUALITY: &str = r#"
experiment = "duality_energy"
seed = 1
trials = 20000
[duality]
n_max = 2
times = [0.5, 1.0]
rate_levels = 3
"#;

#[test]
fn list_names_every_kind() {
    let out = wealthsim(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for kind in [
        "canonical",
        "wealth_stationary",
        "product_check",
        "duality_energy",
        "duality_wealth",
        "diffusion",
        "nagent",
        "eps_infinity",
    ] {
        assert!(text.lines().any(|l| l.starts_with(kind)), "{kind} missing from\n{text}");
    }
}

#[test]
fn validate_echoes_resolved_defaults() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "experiment = \"duality_energy\"\n");
    let out = wealthsim(&["validate", &cfg]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("ok"));
    assert!(text.contains("trials = 100000"));
    assert!(text.contains("n_max: 4"));
}

#[test]
fn validation_errors_name_the_key() {
    let dir = TempDir::new().unwrap();
    for (text, key) in [
        ("experiment = \"wealth_stationary\"\n", "model.lambda"),
        ("experiment = \"canonical\"\ntrials = 0\n", "trials"),
        ("experiment = \"canonical\"\nsamples = 10\n", "samples"),
        ("experiment = \"teleport\"\n", "teleport"),
    ] {
        let cfg = write_config(dir.path(), "bad.toml", text);
        for cmd in ["validate", "run"] {
            let out = wealthsim(&[cmd, &cfg]);
            assert_eq!(out.status.code(), Some(2), "{cmd} {text}");
            let err = String::from_utf8(out.stderr).unwrap();
            assert!(err.contains(key), "{cmd}: `{key}` not in {err}");
        }
    }
}

#[test]
fn run_writes_versioned_artifacts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "eps.toml", SMALL_EPS);
    let out_dir = dir.path().join("out");
    let out = wealthsim(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# wealthsim results v1"));
    assert!(lines.next().unwrap().starts_with("experiment,check,label,value,stderr"));
    assert_eq!(lines.count(), 5);
    let hist = fs::read_to_string(out_dir.join("histogram.csv")).unwrap();
    assert!(hist.starts_with("# wealthsim histogram v1\nseries,lo,hi,count\n"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], true);
    assert_eq!(summary["checks"]["alpha_moment"]["rows"], 4);
}

#[test]
fn duality_summary_passes_every_cell() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "d.toml", SMALL_DUALITY);
    let out_dir = dir.path().join("out");
    let out = wealthsim(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    let rows = summary["rows"].as_array().unwrap();
    let duality: Vec<_> = rows.iter().filter(|r| r["check"] == "duality").collect();
    assert_eq!(duality.len(), 6 * 2);
    assert!(duality.iter().all(|r| r["pass"] == true));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "eps.toml", SMALL_EPS);
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "1", "3"].iter().enumerate() {
        let out_dir = dir.path().join(format!("out{i}"));
        let out = wealthsim(&["run", &cfg, "--out", out_dir.to_str().unwrap(), "--threads", threads]);
        assert!(out.status.success());
        outputs.push(
            ["results.csv", "summary.json", "histogram.csv"].map(|f| fs::read(out_dir.join(f)).unwrap()),
        );
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);

    let seeded = dir.path().join("seeded");
    wealthsim(&["run", &cfg, "--out", seeded.to_str().unwrap(), "--seed", "99"]);
    assert_ne!(fs::read(seeded.join("results.csv")).unwrap(), outputs[0][0]);
}

#[test]
fn failed_check_exits_one() {
    let dir = TempDir::new().unwrap();
    // shape 4 against Beta(2, 2) is not a fixed point
    let cfg = write_config(
        dir.path(),
        "p.toml",
        "experiment = \"product_check\"\n[[product]]\nmu = \"gamma\"\nmu_params = [4.0]\nfamily = \"beta\"\na = 2.0\nb = 2.0\n",
    );
    let out_dir = dir.path().join("out");
    let out = wealthsim(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], false);
}

#[test]
fn trials_override_applies() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "eps.toml", SMALL_EPS);
    let out_dir = dir.path().join("out");
    let out = wealthsim(&["run", &cfg, "--out", out_dir.to_str().unwrap(), "--trials", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("trials"));
}
