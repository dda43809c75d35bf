//! End-to-end checks of the binary's contract: flag handling, default
//! values, output files, error reporting, and rerun stability. Each
//! test drives the compiled binary in a throwaway output directory and
//! inspects the files with an independent JSON parser.

use std::path::Path;
use std::process::{Command, Output};

/// Default physics constants, restated here so a silent change to the
/// library defaults fails this suite.
const KR: f64 = 6.8e-3;
const KD: f64 = 2.99e-4;
const TAU: f64 = 0.25;
const SIGMA: f64 = 0.047;
const K: f64 = 8.7e-6;
const R: f64 = 1.389e-7;
const Q0: f64 = 0.04;
const IS: f64 = 2000.0;
const BOTTOM_FRACTION: f64 = 0.01;
const A0: f64 = 0.4;
const NZ: usize = 7;

const CONFIG_KEYS: [&str; 18] = [
    "kr", "kd", "tau", "sigma", "k", "R", "Q0", "g", "zb0", "Is", "alpha0", "alpha1",
    "bottom_fraction", "a0", "L", "dx", "Nz", "M",
];

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raceway")).args(args).output().expect("binary launches")
}

fn run_with_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raceway"))
        .args(args)
        .env(key, value)
        .output()
        .expect("binary launches")
}

fn read_json(dir: &Path, name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{name} is not valid JSON: {e}"))
}

/// Layer-averaged growth rate of the default flat pond, written out
/// independently of the library.
fn flat_default_mu_bar() -> f64 {
    let u = Q0 / A0;
    let eps = (1.0 / BOTTOM_FRACTION).ln() / A0;
    let mut total = 0.0;
    for n in 0..NZ {
        let depth = (n as f64 + 0.5) * A0 / NZ as f64;
        let intensity = IS * (-eps * depth).exp();
        let si = SIGMA * intensity;
        let denom = TAU * si + 1.0;
        let beta = KD * TAU * si * si / denom;
        let alpha = beta + KR;
        let gamma = K * si / denom;
        total += (gamma * (1.0 - beta / alpha) - R) / u;
    }
    total / NZ as f64
}

#[test]
fn simulate_defaults_match_the_flat_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "simulate failed: {}", String::from_utf8_lossy(&out.stderr));

    let result = read_json(dir.path(), "result.json");
    let mu_bar = result["mu_bar"].as_f64().expect("mu_bar");
    let expected = flat_default_mu_bar();
    assert!(
        (mu_bar - expected).abs() <= 1e-12,
        "mu_bar {mu_bar:.16e} vs closed form {expected:.16e}"
    );
    assert_eq!(result["perm"].as_str().unwrap(), "1-2-3-4-5-6-7");
    assert_eq!(result["cycles"].as_str().unwrap(), "(1)(2)(3)(4)(5)(6)(7)");
    assert_eq!(result["regime"].as_str().unwrap(), "fixed");
    assert!(result["feasible"].as_bool().unwrap());
    let per_day = result["mu_bar_per_day"].as_f64().unwrap();
    assert!((per_day - mu_bar * 86400.0).abs() <= 1e-12 * 86400.0);
}

#[test]
fn simulate_perm_flag_sets_the_lap_permutation() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        run(&["simulate", "--perm", "2-3-1", "--Nz", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let result = read_json(dir.path(), "result.json");
    assert_eq!(result["perm"].as_str().unwrap(), "2-3-1");
    assert_eq!(result["cycles"].as_str().unwrap(), "(1 2 3)");
}

#[test]
fn search_emits_complete_table_and_ordered_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "search", "--regime", "fixed", "--L", "1", "--Nz", "3", "--M", "1", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "search failed: {}", String::from_utf8_lossy(&out.stderr));

    let table = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "perm_id,sigma,cycles,objective,feasible,iterations,a0,a1");
    assert_eq!(lines.len(), 1 + 6, "3! permutations plus header");

    let result = read_json(dir.path(), "result.json");
    assert_eq!(result["n_permutations"].as_i64().unwrap(), 6);
    assert_eq!(result["n_failed"].as_i64().unwrap(), 0);
    assert_eq!(result["config"]["L"].as_f64().unwrap(), 1.0);
    assert_eq!(result["config"]["Nz"].as_i64().unwrap(), 3);

    // The echo must list every key, in the canonical order the config
    // parser documents.
    let text = std::fs::read_to_string(dir.path().join("result.json")).unwrap();
    let mut pos = text.find("\"config\"").expect("config object present");
    for key in CONFIG_KEYS {
        let needle = format!("\"{key}\":");
        let at = text[pos..].find(&needle).unwrap_or_else(|| panic!("key {key} out of order"));
        pos += at + needle.len();
    }
}

#[test]
fn grad_check_passes_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["grad-check", "--Nz", "3", "--M", "2", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "grad-check failed: {}", String::from_utf8_lossy(&out.stderr));
    let result = read_json(dir.path(), "result.json");
    assert!(result["pass"].as_bool().unwrap());
    assert_eq!(result["instances"].as_i64().unwrap(), 20);
    assert_eq!(result["seed"].as_i64().unwrap(), 42);
    assert!(result["max_norm_error"].as_f64().unwrap() < 1e-7);
}

#[test]
fn config_errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "Nz = banana\n").unwrap();
    let out = run(&[
        "simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let stderr = String::from_utf8_lossy(&out.stderr);
    let parsed: serde_json::Value =
        serde_json::from_str(stderr.lines().next().unwrap()).expect("stderr line is JSON");
    assert_eq!(parsed["error"]["kind"].as_str().unwrap(), "config");

    let on_disk = read_json(dir.path(), "error.json");
    assert_eq!(on_disk["error"]["kind"].as_str().unwrap(), "config");
}

#[test]
fn oversized_enumeration_requires_an_explicit_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "search", "--regime", "fixed", "--Nz", "10", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let parsed: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().next().unwrap())
            .unwrap();
    assert_eq!(parsed["error"]["kind"].as_str().unwrap(), "permutation-too-large");
}

#[test]
fn perm_arity_mismatch_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--perm", "2-1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let parsed: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().next().unwrap())
            .unwrap();
    assert_eq!(parsed["error"]["kind"].as_str().unwrap(), "usage");
}

#[test]
fn malformed_workers_env_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with_env(
        &[
            "search", "--regime", "fixed", "--L", "1", "--Nz", "3", "--M", "1", "--out",
            dir.path().to_str().unwrap(),
        ],
        "RACEWAY_WORKERS",
        "three",
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let parsed: serde_json::Value =
        serde_json::from_str(stderr.lines().next().unwrap()).unwrap();
    assert_eq!(parsed["error"]["kind"].as_str().unwrap(), "usage");
    assert!(parsed["error"]["message"].as_str().unwrap().contains("RACEWAY_WORKERS"));
}

#[test]
fn outputs_are_complete_and_leave_no_temp_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "export-profile", "--coeffs", "0.4,0.02,0.01", "--M", "2", "--plots", "on", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["profile.csv", "result.json", "timing.json", "topography.svg"]);
    assert!(names.iter().all(|n| !n.ends_with(".tmp")));

    let profile = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert_eq!(profile.lines().next().unwrap(), "x,h,zb,eta,u,Fr");
    let result = read_json(dir.path(), "result.json");
    assert!((result["volume"].as_f64().unwrap() - 40.0).abs() <= 1e-9);
}

#[test]
fn reruns_are_byte_identical_except_timing() {
    let args = |out: &str| {
        vec![
            "export-profile".to_string(),
            "--coeffs".into(),
            "0.4,0.02,0.01".into(),
            "--M".into(),
            "2".into(),
            "--plots".into(),
            "on".into(),
            "--out".into(),
            out.to_string(),
        ]
    };
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let o1 = Command::new(env!("CARGO_BIN_EXE_raceway"))
        .args(args(dir1.path().to_str().unwrap()))
        .output()
        .unwrap();
    let o2 = Command::new(env!("CARGO_BIN_EXE_raceway"))
        .args(args(dir2.path().to_str().unwrap()))
        .output()
        .unwrap();
    assert!(o1.status.success() && o2.status.success());
    for name in ["result.json", "profile.csv", "topography.svg"] {
        let a = std::fs::read(dir1.path().join(name)).unwrap();
        let b = std::fs::read(dir2.path().join(name)).unwrap();
        assert!(a == b, "{name} differs between reruns");
    }
}

#[test]
fn sweep_length_reports_every_point_and_draws_the_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep-length", "--regime", "fixed", "--lengths", "1,2", "--Nz", "3", "--M", "1",
        "--plots", "on", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "sweep failed: {}", String::from_utf8_lossy(&out.stderr));

    let table = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "length,sigma,cycles,objective,r1,r2,a0,a1,note");
    assert_eq!(lines.len(), 1 + 2);
    assert!(dir.path().join("sweep.svg").exists());

    let result = read_json(dir.path(), "result.json");
    let points = result["points"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    for (point, length) in points.iter().zip([1.0, 2.0]) {
        assert_eq!(point["length"].as_f64().unwrap(), length);
        assert!(point["ok"].as_bool().unwrap());
        assert!(point["best"]["objective"].as_f64().is_some());
    }
}

#[test]
fn nz_convergence_mapping_file_skips_unlisted_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mapping = dir.path().join("perms.txt");
    std::fs::write(&mapping, "# one mapping only\n3: 3-1-2\n").unwrap();
    let out = run(&[
        "nz-convergence", "--nz-list", "3,5", "--mapping", mapping.to_str().unwrap(), "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "nz-convergence failed: {}", String::from_utf8_lossy(&out.stderr));

    let result = read_json(dir.path(), "result.json");
    assert_eq!(result["family"].as_str().unwrap(), "mapping");
    let rows = result["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["mu_bar"].as_f64().is_some());
    assert!(rows[1]["mu_bar"].is_null());
    assert!(rows[1]["note"].as_str().unwrap().contains("no permutation mapping"));
}
