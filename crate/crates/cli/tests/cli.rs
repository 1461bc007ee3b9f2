use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn simlearn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simlearn")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn gen(dir: &Path, extra: &[&str]) {
    let mut args = vec!["gen", "--out", p(dir)];
    args.extend_from_slice(extra);
    let out = simlearn(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_rerun_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, &["--m", "50", "--n", "2", "--seed", "7"]);
    gen(&b, &["--m", "50", "--n", "2", "--seed", "7"]);
    for name in ["features.csv", "distances.csv", "wtrue.csv", "manifest.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let manifest = read_json(a.join("manifest.json"));
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["spec"]["m"], 50);
    let text = fs::read_to_string(a.join("features.csv")).unwrap();
    assert_eq!(text.lines().count(), 50);
    assert!(!text.contains('\r'));
}

#[test]
fn gen_rejects_single_point() {
    assert_eq!(code(&simlearn(&["gen", "--m", "1"])), 2);
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(code(&simlearn(&["gen", "--bogus"])), 2);
    assert_eq!(code(&simlearn(&["train"])), 2);
}

#[test]
fn noiseless_training_recovers_distances() {
    let tmp = TempDir::new().unwrap();
    let g = tmp.path().join("g");
    gen(&g, &["--m", "20", "--noise", "0", "--seed", "3"]);
    let t = tmp.path().join("t");
    let out = simlearn(&[
        "train",
        "--features",
        p(&g.join("features.csv")),
        "--distances",
        p(&g.join("distances.csv")),
        "--lambda-cap",
        "1.5",
        "--out",
        p(&t),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(t.join("train_report.json"));
    assert!(report["final_risk"].as_f64().unwrap() < 1e-6);
    assert_eq!(report["converged"], true);
    assert_eq!(report["seed"], 0);
    let model = read_json(t.join("model.json"));
    assert_eq!(model["type"], "linear");
    assert_eq!(model["meta"]["class"]["k"], 2);
}

#[test]
fn zero_iterations_keeps_initialization() {
    let tmp = TempDir::new().unwrap();
    let g = tmp.path().join("g");
    gen(&g, &["--m", "10"]);
    let run = |dir: &Path, iters: &str| {
        let out = simlearn(&[
            "train",
            "--features",
            p(&g.join("features.csv")),
            "--distances",
            p(&g.join("distances.csv")),
            "--seed",
            "11",
            "--max-iters",
            iters,
            "--out",
            p(dir),
        ]);
        assert_eq!(code(&out), 0);
        read_json(dir.join("model.json"))
    };
    let model = run(&tmp.path().join("t0"), "0");
    for v in model["W"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()) {
        assert!(v.as_f64().unwrap().abs() <= 0.01);
    }
    let report = read_json(tmp.path().join("t0").join("train_report.json"));
    assert_eq!(report["iterations_used"], 0);
    assert_eq!(report["converged"], false);
    assert_eq!(model["W"], run(&tmp.path().join("t1"), "0")["W"]);
}

#[test]
fn mismatched_rows_fail_validation() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, &["--m", "10"]);
    gen(&b, &["--m", "12"]);
    let out = simlearn(&[
        "train",
        "--features",
        p(&a.join("features.csv")),
        "--distances",
        p(&b.join("distances.csv")),
        "--out",
        p(&tmp.path().join("t")),
    ]);
    assert_eq!(code(&out), 4);
}

#[test]
fn missing_input_is_io_error() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.csv");
    let out = simlearn(&["train", "--features", p(&missing), "--distances", p(&missing)]);
    assert_eq!(code(&out), 3);
}

#[test]
fn malformed_csv_fails_validation() {
    let tmp = TempDir::new().unwrap();
    let f = tmp.path().join("f.csv");
    fs::write(&f, "0,1\n1,x\n").unwrap();
    let d = tmp.path().join("d.csv");
    fs::write(&d, "0,1\n1,0\n").unwrap();
    let out = simlearn(&["train", "--features", p(&f), "--distances", p(&d), "--out", p(tmp.path())]);
    assert_eq!(code(&out), 4);
}

/// 100 points evenly spaced on the unit circle with their exact distances
/// and the identity model of budget 1.
fn identity_fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let m = 100;
    let pts: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
            (a.cos(), a.sin())
        })
        .collect();
    let features: String = pts.iter().map(|(x, y)| format!("{x},{y}\n")).collect();
    let mut distances = String::new();
    for a in &pts {
        let row: Vec<String> = pts.iter().map(|b| (((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).to_string()).collect();
        distances.push_str(&row.join(","));
        distances.push('\n');
    }
    let (f, d, model) = (dir.join("features.csv"), dir.join("distances.csv"), dir.join("model.json"));
    fs::write(&f, features).unwrap();
    fs::write(&d, distances).unwrap();
    fs::write(&model, r#"{"type": "linear", "lambda_cap": 1.0, "W": [[1.0, 0.0], [0.0, 1.0]]}"#).unwrap();
    (f, d, model)
}

#[test]
fn identity_certificate_matches_hand_computation() {
    let tmp = TempDir::new().unwrap();
    let (f, d, model) = identity_fixture(tmp.path());
    let out = simlearn(&[
        "certify",
        "--model",
        p(&model),
        "--features",
        p(&f),
        "--distances",
        p(&d),
        "--delta",
        "0.05",
        "--out",
        p(tmp.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cert = read_json(tmp.path().join("certificate.json"));
    let num = |k: &str| cert[k].as_f64().unwrap();
    assert!((num("slack") - 0.569549).abs() < 1e-5, "slack {}", num("slack"));
    assert!((num("M") - 2.0).abs() < 1e-12);
    assert!((num("beta") - 2.0).abs() < 1e-12);
    assert!((num("r") - 1.0).abs() < 1e-12);
    assert_eq!(num("lambda"), 1.0);
    assert_eq!(cert["m"], 100);
    assert_eq!(cert["mode"], "linear");
    assert_eq!(num("bound"), num("empirical_risk") + num("slack"));
}

#[test]
fn certify_rejects_delta_outside_unit_interval() {
    let tmp = TempDir::new().unwrap();
    let (f, d, model) = identity_fixture(tmp.path());
    for delta in ["1.5", "0", "1", "-0.1"] {
        let out = simlearn(&["certify", "--model", p(&model), "--features", p(&f), "--distances", p(&d), "--delta", delta]);
        assert_eq!(code(&out), 2, "delta {delta}");
    }
}

#[test]
fn certify_rejects_malformed_model() {
    let tmp = TempDir::new().unwrap();
    let (f, d, model) = identity_fixture(tmp.path());
    fs::write(&model, r#"{"type": "linear", "lambda_cap": 1.0, "W": [[1.0, 0.0], [0.0]]}"#).unwrap();
    let out = simlearn(&["certify", "--model", p(&model), "--features", p(&f), "--distances", p(&d)]);
    assert_eq!(code(&out), 4);
}

#[test]
fn single_trial_verify_reports_binary_coverage() {
    let tmp = TempDir::new().unwrap();
    let run = |dir: &Path| {
        let out = simlearn(&["verify", "--trials", "1", "--m", "20", "--seed", "5", "--out", p(dir)]);
        assert!(matches!(code(&out), 0 | 5));
        read_json(dir.join("report.json"))
    };
    let report = run(&tmp.path().join("a"));
    let rate = report["coverage_rate"].as_f64().unwrap();
    assert!(rate == 0.0 || rate == 1.0);
    assert_eq!(report["spec"]["seed"], 5);
    assert_eq!(report["n_holdout"], 200);
    assert_eq!(report, run(&tmp.path().join("b")));
    let csv = fs::read_to_string(tmp.path().join("a").join("trials.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "trial,train_risk,holdout_risk,gap,slack,covered");
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn round_trip_on_defaults() {
    let tmp = TempDir::new().unwrap();
    let g = tmp.path().join("g");
    gen(&g, &[]);
    let (f, d) = (g.join("features.csv"), g.join("distances.csv"));
    let t = tmp.path().join("t");
    assert_eq!(code(&simlearn(&["train", "--features", p(&f), "--distances", p(&d), "--out", p(&t)])), 0);
    let c = tmp.path().join("c");
    let out = simlearn(&["certify", "--model", p(&t.join("model.json")), "--features", p(&f), "--distances", p(&d), "--out", p(&c)]);
    assert_eq!(code(&out), 0);
    let cert = read_json(c.join("certificate.json"));
    assert!(cert["bound"].as_f64().unwrap() >= cert["empirical_risk"].as_f64().unwrap());
    let v = tmp.path().join("v");
    let out = simlearn(&["verify", "--out", p(&v)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = read_json(v.join("report.json"));
    assert_eq!(report["n_trials"], 200);
    assert_eq!(report["passed"], true);
}

#[test]
fn kernel_class_trains_and_certifies() {
    let tmp = TempDir::new().unwrap();
    let g = tmp.path().join("g");
    gen(&g, &["--m", "15"]);
    let (f, d) = (g.join("features.csv"), g.join("distances.csv"));
    let t = tmp.path().join("t");
    let out = simlearn(&[
        "train", "--features", p(&f), "--distances", p(&d), "--class", "kernel", "--kernel", "poly", "--degree", "2",
        "--max-iters", "200", "--out", p(&t),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let model = read_json(t.join("model.json"));
    assert_eq!(model["type"], "kernel");
    assert_eq!(model["kernel"]["family"], "polynomial");
    let out = simlearn(&["certify", "--model", p(&t.join("model.json")), "--features", p(&f), "--distances", p(&d), "--out", p(&t)]);
    assert_eq!(code(&out), 0);
    assert_eq!(read_json(t.join("certificate.json"))["mode"], "kernel");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = TempDir::new().unwrap();
    let g = tmp.path().join("g");
    gen(&g, &["--m", "10"]);
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"max_iters": 7, "seed": 42, "step_size": 0.25}"#).unwrap();
    let t = tmp.path().join("t");
    let out = simlearn(&[
        "train", "--features", p(&g.join("features.csv")), "--distances", p(&g.join("distances.csv")), "--config",
        p(&cfg), "--max-iters", "3", "--out", p(&t),
    ]);
    assert_eq!(code(&out), 0);
    let report = read_json(t.join("train_report.json"));
    assert_eq!(report["train_config"]["max_iters"], 3);
    assert_eq!(report["train_config"]["seed"], 42);
    assert_eq!(report["train_config"]["step_size"], 0.25);
    assert_eq!(report["seed"], 42);
}
