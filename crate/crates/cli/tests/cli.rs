//! End-to-end tests of the `maxreg` binary: exit codes, stored run records,
//! artifact determinism, and the cross-run report tables.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Outcome {
    let output = Command::new(env!("CARGO_BIN_EXE_maxreg")).args(args).output().unwrap();
    Outcome {
        code: output.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&output.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
    }
}

/// The run id announced on stdout ("run <hex>").
fn run_id(out: &Outcome) -> String {
    out.stdout
        .lines()
        .find_map(|l| l.strip_prefix("run "))
        .unwrap_or_else(|| panic!("no run id in output:\n{}", out.stdout))
        .trim()
        .to_string()
}

fn record(out_dir: &Path, id: &str) -> serde_json::Value {
    let text = fs::read_to_string(out_dir.join(format!("{id}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

const ROTATING: &str = r#"{
  "family": {"kind": "rotating", "n": 4, "exponent": 0.75, "amplitude": 0.5},
  "tau": 1.0,
  "solver": {"grid": {"N": 64}, "p": 2.0}
}"#;

const ROTATING_ROUGH: &str = r#"{
  "family": {"kind": "rotating", "n": 4, "exponent": 0.4, "amplitude": 0.5},
  "tau": 1.0,
  "solver": {"grid": {"N": 64}, "p": 2.0}
}"#;

const COUNTEREXAMPLE: &str = r#"{
  "family": {"kind": "counterexample", "p": 2.0, "terms": 50},
  "tau": 1.0,
  "solver": {"grid": {"N": 128}, "p": 2.0}
}"#;

#[test]
fn check_accepts_a_smooth_rotating_family() {
    let dir = scratch("check_smooth");
    let cfg = write_config(&dir, "cfg.json", ROTATING);
    let out = run(&["check", "--config", cfg.to_str().unwrap(), "--out", dir.join("runs").to_str().unwrap()]);
    assert_eq!(out.code, 0, "stdout:\n{}\nstderr:\n{}", out.stdout, out.stderr);
    assert!(out.stdout.contains("check: ok"));
    let rec = record(&dir.join("runs"), &run_id(&out));
    assert_eq!(rec["exit_status"], 0);
    assert_eq!(rec["violations"].as_array().unwrap().len(), 0);
    assert!(rec["reports"]["dini"]["integral_32"]["convergent"].as_bool().unwrap());
}

#[test]
fn check_rejects_a_rough_rotating_family() {
    let dir = scratch("check_rough");
    let cfg = write_config(&dir, "cfg.json", ROTATING_ROUGH);
    let out = run(&["check", "--config", cfg.to_str().unwrap(), "--out", dir.join("runs").to_str().unwrap()]);
    assert_eq!(out.code, 1, "stdout:\n{}\nstderr:\n{}", out.stdout, out.stderr);
    assert!(out.stdout.contains("divergent"), "stdout:\n{}", out.stdout);
    let rec = record(&dir.join("runs"), &run_id(&out));
    assert_eq!(rec["exit_status"], 1);
    assert!(!rec["violations"].as_array().unwrap().is_empty());
}

#[test]
fn missing_tau_is_a_usage_error() {
    let dir = scratch("usage_tau");
    let cfg = write_config(
        &dir,
        "cfg.json",
        r#"{"family": {"kind": "rotating", "n": 4, "exponent": 0.75, "amplitude": 0.5}}"#,
    );
    let out = run(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("tau"));
}

#[test]
fn unknown_config_field_is_a_usage_error() {
    let dir = scratch("usage_unknown");
    let cfg = write_config(
        &dir,
        "cfg.json",
        r#"{"family": {"kind": "rotating", "n": 4, "exponent": 0.75, "amplitude": 0.5}, "tau": 1.0, "bogus": 1}"#,
    );
    let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("bogus"));
}

#[test]
fn malformed_json_is_a_usage_error() {
    let dir = scratch("usage_json");
    let cfg = write_config(&dir, "cfg.json", "not json");
    let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.code, 2);
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let out = run(&["check", "--config", "/definitely/not/here.json"]);
    assert_eq!(out.code, 2);
}

#[test]
fn family_commands_reject_the_scalar_problem() {
    let dir = scratch("usage_family");
    let cfg = write_config(&dir, "cfg.json", COUNTEREXAMPLE);
    let out = run(&["hormander", "--config", cfg.to_str().unwrap(), "--out", dir.join("runs").to_str().unwrap()]);
    assert_eq!(out.code, 2);
}

#[test]
fn autonomous_solves_converge_in_one_iteration() {
    let dir = scratch("solve_autonomous");
    let cfg = write_config(
        &dir,
        "cfg.json",
        r#"{
          "family": {"kind": "rotating", "n": 4, "exponent": 0.75, "amplitude": 0.0},
          "tau": 1.0,
          "solver": {"grid": {"N": 64}, "p": 2.0}
        }"#,
    );
    let out = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.join("runs").to_str().unwrap()]);
    assert_eq!(out.code, 0, "stdout:\n{}\nstderr:\n{}", out.stdout, out.stderr);
    let rec = record(&dir.join("runs"), &run_id(&out));
    let iters = rec["reports"]["iterations"].as_array().unwrap();
    assert_eq!(iters.len(), 1);
    assert_eq!(iters[0], 1, "time-independent family must converge immediately");
}

#[test]
fn identical_config_and_seed_reproduce_artifacts_byte_for_byte() {
    let dir = scratch("solve_deterministic");
    let cfg = write_config(&dir, "cfg.json", ROTATING);
    let runs = dir.join("runs");
    let first = run(&["solve", "--config", cfg.to_str().unwrap(), "--seed", "3", "--out", runs.to_str().unwrap()]);
    assert_eq!(first.code, 0);
    let id1 = run_id(&first);
    let u1 = fs::read(runs.join(&id1).join("u.csv")).unwrap();

    let second = run(&["solve", "--config", cfg.to_str().unwrap(), "--seed", "3", "--out", runs.to_str().unwrap()]);
    let id2 = run_id(&second);
    assert_eq!(id1, id2, "same config and seed must map to the same run id");
    let u2 = fs::read(runs.join(&id2).join("u.csv")).unwrap();
    assert_eq!(u1, u2, "artifacts must be reproduced byte for byte");

    let other = run(&["solve", "--config", cfg.to_str().unwrap(), "--seed", "4", "--out", runs.to_str().unwrap()]);
    assert_ne!(run_id(&other), id1, "a different seed must get its own run id");
}

#[test]
fn counterexample_solve_reports_critical_divergence() {
    let dir = scratch("solve_counterexample");
    let cfg = write_config(&dir, "cfg.json", COUNTEREXAMPLE);
    let runs = dir.join("runs");
    let out = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", runs.to_str().unwrap()]);
    assert_eq!(out.code, 0, "stdout:\n{}\nstderr:\n{}", out.stdout, out.stderr);
    let rec = record(&runs, &run_id(&out));
    assert_eq!(rec["reports"]["kind"], "counterexample");
    assert_eq!(rec["reports"]["divergent"], true);
    assert!(runs.join(run_id(&out)).join("solution.csv").exists());
}

#[test]
fn counterexample_command_tracks_the_critical_window() {
    let dir = scratch("ce_refinement");
    let cfg = write_config(&dir, "cfg.json", COUNTEREXAMPLE);
    let runs = dir.join("runs");
    let out = run(&["counterexample", "--config", cfg.to_str().unwrap(), "--out", runs.to_str().unwrap()]);
    assert_eq!(out.code, 0, "stdout:\n{}\nstderr:\n{}", out.stdout, out.stderr);
    let rec = record(&runs, &run_id(&out));
    let ratios = rec["reports"]["critical_ratios"].as_array().unwrap();
    assert_eq!(ratios.len(), 2);
    for r in ratios {
        assert!(r.as_f64().unwrap() > 1.0, "critical norm must climb under refinement");
    }
    let stable = rec["reports"]["stable_rel_changes"].as_array().unwrap();
    for s in stable {
        assert!(s.as_f64().unwrap() < 0.05, "subcritical norm must settle");
    }
    assert!(runs.join(run_id(&out)).join("refinement.csv").exists());
}

#[test]
fn check_flags_the_scalar_problem_as_a_violation() {
    let dir = scratch("check_counterexample");
    let cfg = write_config(&dir, "cfg.json", COUNTEREXAMPLE);
    let out = run(&["check", "--config", cfg.to_str().unwrap(), "--out", dir.join("runs").to_str().unwrap()]);
    assert_eq!(out.code, 1, "stdout:\n{}\nstderr:\n{}", out.stdout, out.stderr);
    assert!(out.stdout.contains("outside L_2"), "stdout:\n{}", out.stdout);
}

#[test]
fn pdo_bench_passes_on_a_rotating_family() {
    let dir = scratch("pdo_bench");
    let cfg = write_config(&dir, "cfg.json", ROTATING);
    let out = run(&["pdo-bench", "--config", cfg.to_str().unwrap(), "--out", dir.join("runs").to_str().unwrap()]);
    assert_eq!(out.code, 0, "stdout:\n{}\nstderr:\n{}", out.stdout, out.stderr);
    let rec = record(&dir.join("runs"), &run_id(&out));
    assert!(rec["reports"]["identity_defect"].as_f64().unwrap() < 1e-9);
    assert!(rec["reports"]["split_reconstruction_defect"].as_f64().unwrap() < 1e-10);
}

#[test]
fn hormander_integrals_stay_finite() {
    let dir = scratch("hormander");
    let cfg = write_config(&dir, "cfg.json", ROTATING);
    let runs = dir.join("runs");
    let out = run(&["hormander", "--config", cfg.to_str().unwrap(), "--out", runs.to_str().unwrap()]);
    assert_eq!(out.code, 0, "stdout:\n{}\nstderr:\n{}", out.stdout, out.stderr);
    let rec = record(&runs, &run_id(&out));
    assert!(rec["reports"]["i1"]["max"].as_f64().unwrap().is_finite());
    assert!(rec["reports"]["i2"]["max"].as_f64().unwrap().is_finite());
    let csv = fs::read_to_string(runs.join(run_id(&out)).join("hormander.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101, "header plus one row per sampled pair");
}

#[test]
fn report_fits_a_slope_across_forced_shifts() {
    let dir = scratch("report_flow");
    let runs = dir.join("runs");
    let mut ids = Vec::new();
    for mu in [4.0, 16.0, 64.0] {
        let cfg = write_config(
            &dir,
            &format!("mu{mu}.json"),
            &format!(
                r#"{{
                  "family": {{"kind": "rotating", "n": 4, "exponent": 0.75, "amplitude": 0.5}},
                  "tau": 1.0,
                  "solver": {{"grid": {{"N": 64}}, "p": 2.0, "shift": {{"auto": false, "mu": {mu}}}, "probes": 1}}
                }}"#
            ),
        );
        let out = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", runs.to_str().unwrap()]);
        assert_eq!(out.code, 0, "stdout:\n{}\nstderr:\n{}", out.stdout, out.stderr);
        ids.push(run_id(&out));
    }

    let mut args = vec!["report".to_string()];
    args.extend(ids.iter().cloned());
    args.push("--out".into());
    args.push(runs.to_str().unwrap().into());
    let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run(&arg_refs);
    assert_eq!(out.code, 0, "stdout:\n{}\nstderr:\n{}", out.stdout, out.stderr);
    assert!(out.stdout.contains("fitted log-log slope"), "stdout:\n{}", out.stdout);

    let table = fs::read_to_string(runs.join(run_id(&out)).join("mu_vs_contraction.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4, "header plus one row per solve:\n{table}");
    assert!(lines[0].starts_with("family_id,run_id,mu,q_norm,fitted_slope"));
    let slope: f64 = lines[1].rsplit(',').next().unwrap().parse().unwrap();
    assert!(slope < 0.0, "contraction estimate must decay as the shift grows, got slope {slope}");

    let rec = record(&runs, &run_id(&out));
    assert_eq!(rec["reports"]["solve_runs"], 3);
}

#[test]
fn report_rejects_unknown_run_ids() {
    let dir = scratch("report_unknown");
    let out = run(&["report", "deadbeef", "--out", dir.join("runs").to_str().unwrap()]);
    assert_eq!(out.code, 1);
    assert!(out.stderr.contains("unknown run id"));
}

#[test]
fn report_with_no_runs_produces_empty_tables() {
    let dir = scratch("report_empty");
    let runs = dir.join("runs");
    let out = run(&["report", "--out", runs.to_str().unwrap()]);
    assert_eq!(out.code, 0, "stdout:\n{}\nstderr:\n{}", out.stdout, out.stderr);
    let table = fs::read_to_string(runs.join(run_id(&out)).join("mu_vs_contraction.csv")).unwrap();
    assert_eq!(table.lines().count(), 1, "only the header:\n{table}");
}
