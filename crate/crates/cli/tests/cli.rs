use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn sheetcalc(dir: &Path, config: &Value, args: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_sheetcalc"))
        .arg("--config")
        .arg(&path)
        .args(args)
        .current_dir(dir)
        .env_remove("OUTPUT_DIR")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn report(dir: &Path, sub: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(sub).join("report.json")).unwrap()).unwrap()
}

fn grid(n_s: usize, n_t: usize, ds: f64, dt: f64) -> Value {
    json!({"n_s": n_s, "n_t": n_t, "ds": ds, "dt": dt})
}

fn linear_ibp(out: &str) -> Value {
    json!({
        "grid": grid(64, 1, 1.0 / 64.0, 1.0 / 64.0),
        "model": {"preset": "linear1d"},
        "mc": {"n_paths": 20000, "seed": 11},
        "run": {"command": "run-ibp", "target": std::f64::consts::E.powi(2)},
        "output": {"directory": out}
    })
}

#[test]
fn zero_model_gives_exact_zeros() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "grid": grid(16, 1, 0.0625, 0.0625),
        "model": {"preset": "zero", "d": 2, "m": 2},
        "mc": {"n_paths": 50, "seed": 3},
        "run": {"command": "run-ibp", "payoffs": [
            {"kind": "coordinate", "index": 1},
            {"kind": "coordinate", "index": 0}
        ]},
        "output": {"directory": "out"}
    });
    let out = sheetcalc(dir.path(), &cfg, &["--assert"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path(), "out");
    assert_eq!(r["result"]["lhs_mean"], json!(0.0));
    assert_eq!(r["result"]["rhs_mean"], json!(0.0));
}

#[test]
fn invalid_step_exits_with_validation_code() {
    let dir = TempDir::new().unwrap();
    let mut cfg = linear_ibp("out");
    cfg["grid"]["ds"] = json!(0.0);
    let out = sheetcalc(dir.path(), &cfg, &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.ds"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_field_is_named() {
    let dir = TempDir::new().unwrap();
    let mut cfg = linear_ibp("out");
    cfg["run"]["tgap"] = json!(0.5);
    let out = sheetcalc(dir.path(), &cfg, &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.tgap"));
}

#[test]
fn missing_model_is_rejected() {
    let dir = TempDir::new().unwrap();
    let mut cfg = linear_ibp("out");
    cfg.as_object_mut().unwrap().remove("model");
    let out = sheetcalc(dir.path(), &cfg, &[]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("model"));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_sheetcalc"))
        .args(["--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn assert_passes_and_fault_is_caught() {
    let dir = TempDir::new().unwrap();
    let ok = sheetcalc(dir.path(), &linear_ibp("ok"), &["--assert"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    assert_eq!(report(dir.path(), "ok")["passed"], json!(true));

    let bad = sheetcalc(dir.path(), &linear_ibp("bad"), &["--assert", "--inject-fault", "r-sign"]);
    assert_eq!(code(&bad), 4, "{}", String::from_utf8_lossy(&bad.stdout));
    let r = report(dir.path(), "bad");
    assert_eq!(r["passed"], json!(false));
    assert_eq!(r["result"]["fault_injection"], json!("r-sign"));

    // without --assert a failed check still exits 0
    let plain = sheetcalc(dir.path(), &linear_ibp("plain"), &["--inject-fault", "r-sign"]);
    assert_eq!(code(&plain), 0);
}

#[test]
fn runs_are_byte_identical_and_expanded_config_reproduces() {
    let dir = TempDir::new().unwrap();
    let mut cfg = linear_ibp("a");
    cfg["mc"]["n_paths"] = json!(500);
    assert_eq!(code(&sheetcalc(dir.path(), &cfg, &["--workers", "3"])), 0);
    cfg["output"]["directory"] = json!("b");
    assert_eq!(code(&sheetcalc(dir.path(), &cfg, &["--workers", "3"])), 0);
    for f in ["report.json", "report.csv", "expanded-config.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        if f == "expanded-config.json" {
            assert_ne!(a, b, "output directories differ");
        } else {
            assert_eq!(a, b, "{f}");
        }
    }

    let mut expanded: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/expanded-config.json")).unwrap()).unwrap();
    expanded["output"]["directory"] = json!("c");
    assert_eq!(code(&sheetcalc(dir.path(), &expanded, &["--workers", "3"])), 0);
    for f in ["report.json", "report.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let c = fs::read(dir.path().join("c").join(f)).unwrap();
        assert_eq!(a, c, "{f}");
    }
}

#[test]
fn overflow_exits_with_numeric_code() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "grid": grid(64, 1, 0.25, 0.25),
        "model": {
            "d": 1,
            "m": 1,
            "fields": [[[{"coef": 4.0, "powers": [3]}]], [[{"coef": 1.0, "powers": [0]}]]],
            "x0": [3.0]
        },
        "mc": {"n_paths": 10, "seed": 1},
        "run": {"command": "run-ibp"},
        "output": {"directory": "out"}
    });
    let out = sheetcalc(dir.path(), &cfg, &[]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let mut cfg = linear_ibp("one");
    cfg["mc"]["n_paths"] = json!(300);
    assert_eq!(code(&sheetcalc(dir.path(), &cfg, &["--workers", "1"])), 0);
    cfg["output"]["directory"] = json!("four");
    assert_eq!(code(&sheetcalc(dir.path(), &cfg, &["--workers", "4"])), 0);
    let (a, b) = (report(dir.path(), "one"), report(dir.path(), "four"));
    assert_eq!(a["config_digest"], b["config_digest"]);
    for key in ["lhs_mean", "lhs_se", "rhs_mean", "rhs_se", "diagnostics"] {
        assert_eq!(a["result"][key], b["result"][key], "{key}");
    }
}

#[test]
fn seed_override_changes_digest_and_result() {
    let dir = TempDir::new().unwrap();
    let mut cfg = linear_ibp("a");
    cfg["mc"]["n_paths"] = json!(200);
    sheetcalc(dir.path(), &cfg, &[]);
    cfg["output"]["directory"] = json!("b");
    sheetcalc(dir.path(), &cfg, &["--seed-override", "12"]);
    let (a, b) = (report(dir.path(), "a"), report(dir.path(), "b"));
    assert_ne!(a["config_digest"], b["config_digest"]);
    assert_ne!(a["result"]["lhs_mean"], b["result"]["lhs_mean"]);
}

#[test]
fn output_dir_env_overrides_config() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("elsewhere");
    let mut cfg = linear_ibp("ignored");
    cfg["mc"]["n_paths"] = json!(100);
    fs::write(dir.path().join("config.json"), cfg.to_string()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sheetcalc"))
        .args(["--config", "config.json"])
        .current_dir(dir.path())
        .env("OUTPUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(target.join("report.json").exists());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn json_only_output_skips_csv() {
    let dir = TempDir::new().unwrap();
    let mut cfg = linear_ibp("out");
    cfg["mc"]["n_paths"] = json!(100);
    cfg["output"]["formats"] = json!(["json"]);
    assert_eq!(code(&sheetcalc(dir.path(), &cfg, &[])), 0);
    assert!(dir.path().join("out/report.json").exists());
    assert!(!dir.path().join("out/report.csv").exists());
}

fn smoke(run: Value, grid: Value, model: Option<Value>, n_paths: usize, files: &[&str]) -> Value {
    let dir = TempDir::new().unwrap();
    let mut cfg = json!({
        "grid": grid,
        "mc": {"n_paths": n_paths, "seed": 5},
        "run": run,
        "output": {"directory": "out"}
    });
    if let Some(m) = model {
        cfg["model"] = m;
    }
    let out = sheetcalc(dir.path(), &cfg, &["--assert"]);
    assert_eq!(
        code(&out),
        0,
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    for f in files {
        let text = fs::read_to_string(dir.path().join("out").join(f)).unwrap();
        if f.ends_with(".csv") {
            assert!(text.starts_with("# sheetcalc"), "{f}");
        }
    }
    report(dir.path(), "out")
}

#[test]
fn simulate_sheet_smoke() {
    let r = smoke(
        json!({"command": "simulate-sheet"}),
        grid(8, 8, 0.125, 0.125),
        None,
        2000,
        &["report.csv", "field.csv"],
    );
    assert_eq!(r["command"], json!("simulate-sheet"));
}

#[test]
fn sample_ou_smoke() {
    smoke(
        json!({"command": "sample-ou", "sampler": "hyperbolic"}),
        grid(16, 16, 0.0625, 0.0625),
        None,
        500,
        &["report.csv", "field.csv"],
    );
}

#[test]
fn verify_rules_smoke() {
    let r = smoke(json!({"command": "verify-rules"}), grid(8, 8, 0.125, 0.125), None, 1000, &["report.csv"]);
    assert!(r["result"]["checks"].as_array().unwrap().len() >= 10);
}

#[test]
fn solve_hyperbolic_smoke() {
    for system in ["sheet", "ou_clock", "bounded"] {
        smoke(
            json!({"command": "solve-hyperbolic", "system": system}),
            grid(8, 8, 0.0625, 0.0625),
            None,
            2,
            &["report.csv", "field.csv"],
        );
    }
    let r = smoke(
        json!({"command": "solve-hyperbolic", "system": "goursat", "lambda": 1.0, "blowup_M": 100.0}),
        grid(16, 16, 0.0625, 0.0625),
        None,
        2,
        &["field.csv"],
    );
    let in_domain = r["result"]["in_domain"].as_u64().unwrap();
    assert!(in_domain < 289 && in_domain > 0);
    assert!(!r["result"]["frontier"].as_array().unwrap().is_empty());
}

#[test]
fn run_bismut_smoke() {
    smoke(
        json!({"command": "run-bismut", "target": 0.5_f64.exp()}),
        grid(32, 1, 1.0 / 32.0, 1.0 / 32.0),
        Some(json!({"preset": "linear1d"})),
        5000,
        &["report.csv"],
    );
}

#[test]
fn run_reversibility_smoke() {
    let r = smoke(
        json!({"command": "run-reversibility", "t_gap": 0.25}),
        grid(16, 4, 0.0625, 0.125),
        Some(json!({"preset": "ou"})),
        1000,
        &["report.csv"],
    );
    assert_eq!(r["result"]["diagnostics"]["t_gap"], json!(0.25));
}

#[test]
fn carre_du_champ_smoke() {
    smoke(
        json!({"command": "run-reversibility", "lags": [0.0625, 0.125, 0.25]}),
        grid(128, 4, 1.0 / 128.0, 0.0625),
        Some(json!({"preset": "linear1d"})),
        4000,
        &["report.csv"],
    );
}

#[test]
fn holder_scan_smoke() {
    let r = smoke(
        json!({"command": "holder-scan"}),
        grid(8, 16, 0.125, 0.0625),
        None,
        2000,
        &["report.csv"],
    );
    let slope = r["result"]["fitted_slope"].as_f64().unwrap();
    assert!((0.85..=1.15).contains(&slope), "{slope}");
}
