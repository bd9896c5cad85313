use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bayesfp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bayesfp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn tiny_search() -> Value {
    json!({
        "population_size": 4,
        "q": 3,
        "n_init": 30,
        "n_expl": 30,
        "n_final": 60,
        "n_populations": 2,
        "seed": 3
    })
}

/// Writes `x1,x2[,extra]` rows with a response built by `response(i, x1, x2)`.
fn write_data(dir: &Path, header: &str, rows: usize, response: impl Fn(usize, f64, f64) -> String) -> PathBuf {
    let mut text = format!("x1,x2,{header}\n");
    for i in 0..rows {
        let x1 = 1.0 + (i % 17) as f64 / 4.0;
        let x2 = 0.5 + ((i * 7) % 13) as f64 / 3.0;
        text.push_str(&format!("{x1},{x2},{}\n", response(i, x1, x2)));
    }
    let path = dir.join("data.csv");
    fs::write(&path, text).unwrap();
    path
}

fn write_config(dir: &Path, response: Value) -> PathBuf {
    let cfg = json!({
        "data": {
            "path": "data.csv",
            "schema": {"x1": "continuous", "x2": "continuous"},
            "response": response
        },
        "split": {"train_fraction": 0.7, "seed": 2},
        "search": tiny_search(),
        "output_dir": "out"
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn gaussian_case() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    write_data(dir.path(), "y", 80, |i, x1, x2| format!("{}", 2.0 * x1.ln() - x2 + ((i * 5) % 7) as f64 / 10.0));
    let cfg = write_config(dir.path(), json!({"name": "y", "family": "gaussian"}));
    (dir, cfg)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn metric_keys(path: &Path) -> Vec<String> {
    let mut keys: Vec<String> = read_json(path).as_object().unwrap().keys().cloned().collect();
    keys.sort();
    keys
}

#[test]
fn fit_is_reproducible_for_a_seed() {
    let (dir, cfg) = gaussian_case();
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = bayesfp(&["fit", "--config", cfg, "--out", out.to_str().unwrap(), "--chains", "2"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ra = fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, fs::read(b.join("report.json")).unwrap());
    assert!(a.join("inclusion.txt").exists());
}

#[test]
fn evaluate_writes_gaussian_metrics_and_predict_reproduces_them() {
    let (dir, cfg) = gaussian_case();
    let cfg = cfg.to_str().unwrap();
    let o = bayesfp(&["evaluate", "--config", cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    assert_eq!(metric_keys(&out.join("metrics.json")), ["corr", "mae", "rmse"]);
    let predictions = fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert!(predictions.starts_with("row,prediction\n"));
    assert_eq!(predictions.lines().count(), 1 + 24);
    let evaluated = read_json(&out.join("metrics.json"));

    fs::remove_file(out.join("metrics.json")).unwrap();
    let o = bayesfp(&["predict", "--config", cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let predicted = read_json(&out.join("metrics.json"));
    for k in ["rmse", "mae", "corr"] {
        let (a, b) = (evaluated[k].as_f64().unwrap(), predicted[k].as_f64().unwrap());
        assert!((a - b).abs() < 1e-9, "{k}: {a} vs {b}");
    }
}

#[test]
fn bernoulli_metrics_block() {
    let dir = TempDir::new().unwrap();
    write_data(dir.path(), "y", 120, |i, x1, x2| {
        let noisy = x1 - x2 + if i % 5 == 0 { 2.0 } else { 0.0 };
        if noisy > 1.0 { "1" } else { "0" }.to_string()
    });
    let cfg = write_config(dir.path(), json!({"name": "y", "family": "bernoulli"}));
    let o = bayesfp(&["evaluate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    assert_eq!(metric_keys(&out.join("metrics.json")), ["acc", "fnr", "fpr"]);
    let predictions = fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert!(predictions.starts_with("row,probability,class\n"));
}

#[test]
fn survival_metrics_block() {
    let dir = TempDir::new().unwrap();
    write_data(dir.path(), "time,status", 120, |i, x1, x2| {
        let time = (10.0 / (0.3 * x1 + 0.1 * x2)) * (1.0 + (i % 11) as f64 / 5.0);
        format!("{time:.2},{}", u8::from(i % 4 != 0))
    });
    let cfg = write_config(
        dir.path(),
        json!({"name": "time", "status": "status", "family": "timetoevent"}),
    );
    let o = bayesfp(&["evaluate", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let keys = metric_keys(&out.join("metrics.json"));
    assert!(keys.contains(&"ibs".to_string()) && keys.contains(&"cindex".to_string()));
    assert!(!keys.contains(&"rmse".to_string()) && !keys.contains(&"acc".to_string()));
    let predictions = fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert!(predictions.starts_with("row,linear_predictor\n"));
}

#[test]
fn invalid_configuration_exits_with_code_two() {
    let dir = TempDir::new().unwrap();
    write_data(dir.path(), "y", 20, |_, x1, _| x1.to_string());
    let cfg = write_config(dir.path(), json!({"name": "y", "family": "poisson"}));
    let o = bayesfp(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());

    let cfg = write_config(dir.path(), json!({"name": "y", "family": "gaussian"}));
    let cfg = cfg.to_str().unwrap();
    assert_eq!(bayesfp(&["fit", "--config", cfg, "--set", "search.q=0"]).status.code(), Some(2));
    assert_eq!(bayesfp(&["fit", "--config", cfg, "--set", "search.bogus=1"]).status.code(), Some(2));
    assert_eq!(bayesfp(&["simulate", "--config", cfg]).status.code(), Some(2));
    assert_eq!(bayesfp(&["fit", "--config", "missing.json"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_with_code_one() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("data.csv"), "x1,x2,y\n1,2,3\n1,oops,4\n").unwrap();
    let cfg = write_config(dir.path(), json!({"name": "y", "family": "gaussian"}));
    let o = bayesfp(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("oops"));
}

#[test]
fn failed_write_leaves_no_partial_outputs() {
    let (dir, cfg) = gaussian_case();
    let out = dir.path().join("out");
    fs::create_dir_all(out.join("predictions.csv")).unwrap();
    let o = bayesfp(&["evaluate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.join("report.json").exists());
    assert!(!out.join("inclusion.txt").exists());
    assert!(!out.join("metrics.json").exists());
}

fn simulate_config(dir: &Path) -> PathBuf {
    let predictors = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/art_predictors.csv");
    let cfg = json!({
        "search": {
            "population_size": 12,
            "q": 12,
            "d": 16,
            "n_init": 20,
            "n_expl": 20,
            "n_final": 20,
            "n_populations": 2
        },
        "simulation": {"predictors": predictors, "replicates": 1, "seed": 4},
        "output_dir": "out"
    });
    let path = dir.join("sim.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn scenario_variances(out: &Path) -> Vec<String> {
    let text = fs::read_to_string(out.join("scenario_results.csv")).unwrap();
    let mut v: Vec<String> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    v.dedup();
    v
}

#[test]
fn simulate_grid_sizes() {
    let dir = TempDir::new().unwrap();
    let cfg = simulate_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let o = bayesfp(&["simulate", "--config", cfg, "--ideal"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    assert_eq!(scenario_variances(&out).len(), 5);
    assert!(out.join("trace.csv").exists());
    assert_eq!(read_json(&out.join("scenario_summary.json")).as_array().unwrap().len(), 5);

    let full = dir.path().join("full");
    let o = bayesfp(&["simulate", "--config", cfg, "--grid", "full", "--out", full.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(scenario_variances(&full).len(), 16);
}
