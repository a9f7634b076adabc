//! Black-box tests of the `eprsim` binary: config handling, output shape,
//! determinism and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn eprsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eprsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

fn stderr(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).unwrap()
}

fn write_config(dir: &Path, contents: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, contents).unwrap();
    path.display().to_string()
}

#[test]
fn budget_defaults_match_empty_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let bare = eprsim(&["budget", "--json"]);
    let with_empty = eprsim(&["budget", "--json", "--config", &config]);
    assert!(bare.status.success());
    assert!(with_empty.status.success());
    assert_eq!(stdout(&bare), stdout(&with_empty));
}

#[test]
fn budget_table_reports_product_and_reference() {
    let out = eprsim(&["budget"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("ħ/18.1"), "missing product line in:\n{text}");
    assert!(text.contains("paper: ħ/17"), "missing reference in:\n{text}");
}

#[test]
fn idempotent_override_yields_identical_budget() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "spectrometer_resolution = 7e9\n");
    let default = eprsim(&["budget", "--json"]);
    let overridden = eprsim(&["budget", "--json", "--config", &config]);
    assert_eq!(stdout(&default), stdout(&overridden));
}

#[test]
fn typo_key_fails_with_suggestion_and_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "slitwidth = 1e-8\n");
    let out = eprsim(&["budget", "--config", &config]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("slitwidth"), "stderr: {err}");
    assert!(err.contains("slit_width"), "stderr: {err}");
}

#[test]
fn invalid_config_fails_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "slit_to_detector_distance = -1.0\n");
    let out = eprsim(&["budget", "--config", &config]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!stderr(&out).is_empty());
}

#[test]
fn simulate_is_deterministic_for_fixed_seed() {
    let args = ["simulate", "--json", "--events", "5000", "--seed", "11"];
    let a = eprsim(&args);
    let b = eprsim(&args);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert!(summary["n_accepted"].as_u64().unwrap() >= 5000);
}

#[test]
fn simulate_with_closed_passband_exits_2() {
    // a vanishingly narrow passband accepts nothing
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "spectrometer_passband_fraction = 1e-30\n");
    let out = eprsim(&[
        "simulate", "--config", &config, "--events", "1000", "--seed", "1",
        "--max-samples", "2000000",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no events accepted"));
}

#[test]
fn rate_modes_differ_and_paper_matches_ledger() {
    let paper = eprsim(&["rate", "--json"]);
    let derived = eprsim(&["rate", "--json", "--mode", "derived"]);
    assert!(paper.status.success());
    assert!(derived.status.success());
    let p: serde_json::Value = serde_json::from_str(&stdout(&paper)).unwrap();
    let d: serde_json::Value = serde_json::from_str(&stdout(&derived)).unwrap();
    let p_rate = p["final_rate_per_minute"]["value"].as_f64().unwrap();
    let d_rate = d["final_rate_per_minute"]["value"].as_f64().unwrap();
    assert!((p_rate - 0.024).abs() / 0.024 < 0.05, "paper rate {p_rate}");
    assert!(d_rate < p_rate, "derived velocity volume should shrink the rate");
}

#[test]
fn sweep_single_point_reproduces_budget_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.toml");
    fs::write(
        &sweep,
        "[[parameter]]\nname = \"total_position_sigma\"\nvalues = [1e-8]\n",
    )
    .unwrap();
    let sweep_out = eprsim(&["sweep", "--json", "--sweep", &sweep.display().to_string()]);
    assert!(sweep_out.status.success(), "{}", stderr(&sweep_out));
    let result: serde_json::Value = serde_json::from_str(&stdout(&sweep_out)).unwrap();
    let rows = result["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);

    let budget_out = eprsim(&["budget", "--json"]);
    let budget: serde_json::Value = serde_json::from_str(&stdout(&budget_out)).unwrap();
    let row_product = rows[0]["budget"]["dispersion_product"].as_f64().unwrap();
    let budget_product = budget["dispersion_product"]["value"].as_f64().unwrap();
    assert_eq!(row_product, budget_product);
    assert_eq!(result["best_feasible"].as_u64(), Some(0));
}

#[test]
fn out_dir_gets_files_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("results");
    let out = eprsim(&["budget", "--out", &out_dir.display().to_string()]);
    assert!(out.status.success());
    for name in ["budget.json", "budget.txt", "manifest.json"] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "budget");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    let outputs = manifest["output_paths"].as_array().unwrap();
    assert_eq!(outputs.len(), 3);
}

#[test]
fn report_without_mc_marks_columns_not_run() {
    let out = eprsim(&["report", "--events", "0"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("not run"), "report:\n{text}");
    assert!(text.contains("reference"), "report:\n{text}");
}

#[test]
fn report_with_mc_shows_agreement_ratios() {
    let out = eprsim(&["report", "--events", "20000", "--seed", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(!text.contains("not run"), "report:\n{text}");
    assert!(text.contains("mc/analytic"), "report:\n{text}");
    // the three comparison rows all carry a finite ratio near 1
    for line in text.lines().filter(|l| {
        l.starts_with("arrival time dispersion")
            || l.starts_with("velocity dispersion")
            || l.starts_with("dispersion product (")
    }) {
        let ratio: f64 = line.split_whitespace().last().unwrap().parse().unwrap();
        assert!((0.5..2.0).contains(&ratio), "ratio off in line: {line}");
    }
}
