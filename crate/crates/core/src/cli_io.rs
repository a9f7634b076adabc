//! Configuration-file handling, output emission and the command
//! implementations behind the `eprsim` binary.
//!
//! Config files are flat TOML `key = value` pairs layered over
//! [`table1_default`]: unknown keys are hard errors (with a nearest-key
//! suggestion), missing keys silently keep their defaults but are reported
//! back to the caller as notices.

use crate::analytic_budget::{full_budget, BudgetReport};
use crate::apparatus::{
    nearest_field, table1_default, validate, ApparatusConfig, NUMERIC_FIELDS,
};
use crate::monte_carlo::{
    residual_histogram, run_simulation, RunPlan, SimulationSummary, DEFAULT_HISTOGRAM_BINS,
};
use crate::quantities::{consts, AtomSpecies};
use crate::rate_budget::{paper_chain, sensitivity, RateChain, VelocityVolumeMode};
use crate::sweep_optimize::{
    run_sweep, EvalMode, GridSpec, Objective, SweepResult, SweepSpec,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Default seed for reproducible runs; randomness is opt-in via --seed.
pub const DEFAULT_SEED: u64 = 20260823;

/// Exit code classification: 1 for configuration/parse problems, 2 for
/// runtime failures (e.g. a simulation that accepts no events).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error in `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("unknown config key `{key}` in `{path}`{}", suggestion.as_ref().map(|s| format!(", did you mean `{s}`?")).unwrap_or_default())]
    UnknownKey { path: String, key: String, suggestion: Option<String> },
    #[error("configuration rejected:\n{0}")]
    Invalid(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 2,
            _ => 1,
        }
    }
}

/// A parsed configuration plus the keys that fell back to defaults.
#[derive(Debug, Clone)]
pub struct ParsedConfig {
    pub config: ApparatusConfig,
    /// Keys present in the file.
    pub overridden: Vec<String>,
    /// SHA-256 of the raw config bytes (of the empty string when no file).
    pub sha256: String,
    pub path: Option<PathBuf>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Read a flat TOML config and layer it over [`table1_default`].
pub fn parse_config(path: Option<&Path>) -> Result<ParsedConfig, CliError> {
    let Some(path) = path else {
        return Ok(ParsedConfig {
            config: table1_default(),
            overridden: vec![],
            sha256: sha256_hex(b""),
            path: None,
        });
    };
    let raw = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let table: toml::Table = raw.parse().map_err(|e: toml::de::Error| CliError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;

    let mut config = table1_default();
    let mut overridden = Vec::new();
    let as_f64 = |key: &str, v: &toml::Value| -> Result<f64, CliError> {
        match v {
            toml::Value::Float(f) => Ok(*f),
            toml::Value::Integer(i) => Ok(*i as f64),
            other => Err(CliError::Parse {
                path: path.display().to_string(),
                message: format!("key `{key}` must be a number, got {other}"),
            }),
        }
    };
    // apply the boolean switch first so later slit assignments respect it
    if let Some(v) = table.get("slit_sigma_override") {
        config.slit_sigma_override = v.as_bool().ok_or_else(|| CliError::Parse {
            path: path.display().to_string(),
            message: "key `slit_sigma_override` must be a boolean".into(),
        })?;
        overridden.push("slit_sigma_override".into());
    }
    for (key, value) in &table {
        match key.as_str() {
            "slit_sigma_override" => {}
            "natural_linewidth_fraction" => {
                config.natural_linewidth_fraction = Some(as_f64(key, value)?);
                overridden.push(key.clone());
            }
            "spectrometer_noise_fraction" => {
                config.spectrometer_noise_fraction = Some(as_f64(key, value)?);
                overridden.push(key.clone());
            }
            "species" => {
                let species: AtomSpecies =
                    value.clone().try_into().map_err(|e: toml::de::Error| CliError::Parse {
                        path: path.display().to_string(),
                        message: format!("key `species`: {e}"),
                    })?;
                config.species = species;
                overridden.push(key.clone());
            }
            k if NUMERIC_FIELDS.contains(&k) => {
                let v = as_f64(key, value)?;
                config.set_field(k, v).expect("key checked against registry");
                overridden.push(key.clone());
            }
            other => {
                return Err(CliError::UnknownKey {
                    path: path.display().to_string(),
                    key: other.to_string(),
                    suggestion: nearest_field(other),
                });
            }
        }
    }
    Ok(ParsedConfig {
        config,
        overridden,
        sha256: sha256_hex(raw.as_bytes()),
        path: Some(path.to_path_buf()),
    })
}

fn require_valid(config: &ApparatusConfig) -> Result<(), CliError> {
    let report = validate(config);
    if report.has_errors() {
        return Err(CliError::Invalid(report.to_string()));
    }
    Ok(())
}

/// Provenance record written alongside every file-producing run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub config_sha256: String,
    pub seed: u64,
    pub tool_version: String,
    pub timestamp: String,
    pub output_paths: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, parsed: &ParsedConfig, seed: u64) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            config_path: parsed.path.as_ref().map(|p| p.display().to_string()),
            config_sha256: parsed.sha256.clone(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            output_paths: vec![],
        }
    }
}

/// Accumulates output files under an optional directory and finishes with a
/// manifest naming everything it wrote.
struct OutputSink<'a> {
    dir: Option<&'a Path>,
    manifest: RunManifest,
}

impl<'a> OutputSink<'a> {
    fn new(dir: Option<&'a Path>, manifest: RunManifest) -> OutputSink<'a> {
        OutputSink { dir, manifest }
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let Some(dir) = self.dir else { return Ok(()) };
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.manifest.output_paths.push(path.display().to_string());
        Ok(())
    }

    fn finish(mut self) -> Result<(), CliError> {
        let Some(dir) = self.dir else { return Ok(()) };
        let path = dir.join("manifest.json");
        self.manifest.output_paths.push(path.display().to_string());
        let body = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&path, body).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn notice_defaults(parsed: &ParsedConfig, err: &mut impl std::io::Write) {
    if parsed.path.is_some() {
        let defaulted = NUMERIC_FIELDS
            .iter()
            .filter(|f| !parsed.overridden.iter().any(|o| o == *f))
            .count();
        let _ = writeln!(
            err,
            "notice: {} key(s) overridden, {defaulted} numeric key(s) at defaults",
            parsed.overridden.len()
        );
    }
}

/// `budget`: closed-form dispersion report.
pub fn command_budget(
    parsed: &ParsedConfig,
    json: bool,
    out_dir: Option<&Path>,
    stdout: &mut impl std::io::Write,
    stderr: &mut impl std::io::Write,
) -> Result<(), CliError> {
    notice_defaults(parsed, stderr);
    require_valid(&parsed.config)?;
    let report = full_budget(&parsed.config).map_err(|e| CliError::Invalid(e.to_string()))?;
    let json_body = serde_json::to_string_pretty(&report.to_json()).expect("report serializes");
    if json {
        let _ = writeln!(stdout, "{json_body}");
    } else {
        let _ = write!(stdout, "{report}");
    }
    let mut sink = OutputSink::new(out_dir, RunManifest::new("budget", parsed, DEFAULT_SEED));
    sink.write("budget.json", &json_body)?;
    sink.write("budget.txt", &report.to_string())?;
    sink.finish()
}

fn histogram_csv(summary: &SimulationSummary) -> String {
    let hist = residual_histogram(summary, DEFAULT_HISTOGRAM_BINS);
    let mut csv = String::from("bin_left_s,bin_right_s,count\n");
    for (i, count) in hist.counts.iter().enumerate() {
        let _ = writeln!(csv, "{:e},{:e},{count}", hist.bin_edges[i], hist.bin_edges[i + 1]);
    }
    csv
}

/// `simulate`: per-event Monte Carlo of the measurement chain.
pub fn command_simulate(
    parsed: &ParsedConfig,
    events: u64,
    seed: u64,
    max_samples: u64,
    json: bool,
    out_dir: Option<&Path>,
    stdout: &mut impl std::io::Write,
    stderr: &mut impl std::io::Write,
) -> Result<(), CliError> {
    notice_defaults(parsed, stderr);
    require_valid(&parsed.config)?;
    let plan = RunPlan::accepted_target(events, seed).with_max_samples(max_samples);
    let summary = run_simulation(&parsed.config, &plan)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    if summary.n_accepted == 0 {
        return Err(CliError::Runtime(format!(
            "no events accepted after {} samples; widen the acceptance or passband",
            summary.n_sampled
        )));
    }
    let json_body = serde_json::to_string_pretty(&summary).expect("summary serializes");
    if json {
        let _ = writeln!(stdout, "{json_body}");
    } else {
        let _ = writeln!(stdout, "sampled: {}", summary.n_sampled);
        let _ = writeln!(stdout, "accepted: {}", summary.n_accepted);
        let _ = writeln!(stdout, "acceptance fraction: {:.4e}", summary.acceptance_fraction);
        if let Some(dt) = summary.empirical_arrival_time_dispersion {
            let _ = writeln!(stdout, "arrival time dispersion: {dt:.4e} s");
        }
        if let Some(dv) = summary.empirical_velocity_dispersion {
            let _ = writeln!(stdout, "velocity dispersion: {dv:.4e} m/s");
        }
        if let Some(p) = summary.empirical_product_over_hbar {
            let _ = writeln!(stdout, "dispersion product: {p:.4e} ħ (ħ/{:.1})", 1.0 / p);
        }
    }
    let mut sink = OutputSink::new(out_dir, RunManifest::new("simulate", parsed, seed));
    sink.write("simulation.json", &json_body)?;
    sink.write("residual_histogram.csv", &histogram_csv(&summary))?;
    sink.finish()
}

/// `rate`: counting-rate ledger.
pub fn command_rate(
    parsed: &ParsedConfig,
    mode: VelocityVolumeMode,
    json: bool,
    out_dir: Option<&Path>,
    stdout: &mut impl std::io::Write,
    stderr: &mut impl std::io::Write,
) -> Result<(), CliError> {
    notice_defaults(parsed, stderr);
    require_valid(&parsed.config)?;
    let chain = paper_chain(&parsed.config, mode)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let body = serde_json::json!({
        "mode": mode,
        "chain": chain,
        "final_rate_per_minute": {"value": chain.final_rate_per_minute(), "unit": "1/min"},
        "sensitivity": sensitivity(&chain),
    });
    let json_body = serde_json::to_string_pretty(&body).expect("chain serializes");
    if json {
        let _ = writeln!(stdout, "{json_body}");
    } else {
        let _ = write!(stdout, "{}", chain.ledger());
    }
    let mut sink = OutputSink::new(out_dir, RunManifest::new("rate", parsed, DEFAULT_SEED));
    sink.write("rate.json", &json_body)?;
    sink.write("rate.txt", &chain.ledger())?;
    sink.finish()
}

/// On-disk sweep description (flat TOML), converted to a [`SweepSpec`].
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub parameter: Vec<SweepParameter>,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    #[serde(default)]
    pub min_rate_per_minute: Option<f64>,
    /// Monte Carlo accepted-event target per grid point; analytic when absent.
    #[serde(default)]
    pub monte_carlo_events: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_objective() -> Objective {
    Objective::DispersionProduct
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParameter {
    pub name: String,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
    /// "linear" (default) or "log".
    #[serde(default)]
    pub scale: Option<String>,
}

pub fn load_sweep_spec(path: &Path, default_seed: u64) -> Result<SweepSpec, CliError> {
    let raw = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: SweepFile = toml::from_str(&raw).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut parameters = Vec::new();
    for p in &file.parameter {
        let grid = match (&p.values, p.min, p.max, p.n) {
            (Some(values), None, None, None) => GridSpec::Values { values: values.clone() },
            (None, Some(min), Some(max), Some(n)) => match p.scale.as_deref() {
                None | Some("linear") => GridSpec::Linear { min, max, n },
                Some("log") => GridSpec::Log { min, max, n },
                Some(other) => {
                    return Err(CliError::Parse {
                        path: path.display().to_string(),
                        message: format!(
                            "parameter `{}`: scale must be linear or log, got `{other}`",
                            p.name
                        ),
                    })
                }
            },
            _ => {
                return Err(CliError::Parse {
                    path: path.display().to_string(),
                    message: format!(
                        "parameter `{}` needs either `values` or all of min/max/n",
                        p.name
                    ),
                })
            }
        };
        parameters.push((p.name.clone(), grid));
    }
    Ok(SweepSpec {
        parameters,
        objective: file.objective,
        min_rate_per_minute: file.min_rate_per_minute,
        eval: match file.monte_carlo_events {
            Some(events) => EvalMode::MonteCarlo {
                events,
                seed: file.seed.unwrap_or(default_seed),
            },
            None => EvalMode::Analytic,
        },
    })
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut csv = String::new();
    for name in &result.parameter_names {
        let _ = write!(csv, "{name},");
    }
    csv.push_str(
        "dispersion_product_Js,dispersion_product_over_hbar,arrival_time_dispersion_s,\
         velocity_resolution_ms,rate_per_minute,feasible\n",
    );
    for row in &result.rows {
        for v in &row.point {
            let _ = write!(csv, "{v:e},");
        }
        match &row.budget {
            Some(b) => {
                let _ = write!(
                    csv,
                    "{:e},{:e},{:e},{:e},",
                    b.dispersion_product,
                    b.dispersion_product_over_hbar,
                    b.arrival_time_dispersion,
                    b.velocity_resolution
                );
            }
            None => csv.push_str(",,,,"),
        }
        match row.rate_per_minute {
            Some(r) => {
                let _ = write!(csv, "{r:e},");
            }
            None => csv.push(','),
        }
        let _ = writeln!(csv, "{}", row.feasible);
    }
    csv
}

/// `sweep`: exhaustive grid evaluation from a sweep description file.
pub fn command_sweep(
    parsed: &ParsedConfig,
    spec: &SweepSpec,
    json: bool,
    out_dir: Option<&Path>,
    stdout: &mut impl std::io::Write,
    stderr: &mut impl std::io::Write,
) -> Result<(), CliError> {
    notice_defaults(parsed, stderr);
    require_valid(&parsed.config)?;
    let result = run_sweep(spec, &parsed.config).map_err(|e| CliError::Invalid(e.to_string()))?;
    let json_body = serde_json::to_string_pretty(&result).expect("sweep serializes");
    if json {
        let _ = writeln!(stdout, "{json_body}");
    } else {
        let _ = write!(stdout, "{}", sweep_csv(&result));
        match result.best_feasible {
            Some(i) => {
                let _ = writeln!(stdout, "# best feasible row: {i} at {:?}", result.rows[i].point);
            }
            None => {
                let _ = writeln!(stdout, "# no feasible rows");
            }
        }
    }
    let seed = match spec.eval {
        EvalMode::MonteCarlo { seed, .. } => seed,
        EvalMode::Analytic => DEFAULT_SEED,
    };
    let mut sink = OutputSink::new(out_dir, RunManifest::new("sweep", parsed, seed));
    sink.write("sweep.json", &json_body)?;
    sink.write("sweep.csv", &sweep_csv(&result))?;
    sink.finish()
}

/// Reference values the report column compares against: arrival-time
/// dispersion 5e-4 s, velocity resolution 0.05 m/s, product ħ/17.
pub const REFERENCE_ARRIVAL_TIME_DISPERSION: f64 = 5e-4;
pub const REFERENCE_VELOCITY_RESOLUTION: f64 = 0.05;
pub const REFERENCE_PRODUCT_OVER_HBAR: f64 = 1.0 / 17.0;

fn sig3(v: f64) -> String {
    format!("{v:.3}")
}

/// Consolidated report juxtaposing the closed-form budget, the Monte Carlo
/// estimates and the published reference values.
pub fn render_report(
    budget: &BudgetReport,
    mc: Option<&SimulationSummary>,
    chain: &RateChain,
) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:>12} {:>12} {:>12} {:>10}",
        "quantity", "analytic", "monte carlo", "reference", "mc/analytic"
    );
    let mut row = |name: &str, analytic: f64, mc_value: Option<f64>, reference: f64| {
        let (mc_col, ratio) = match mc_value {
            Some(v) => (format!("{v:.4e}"), sig3(v / analytic)),
            None => ("not run".into(), "-".into()),
        };
        let _ = writeln!(
            out,
            "{name:<28} {:>12.4e} {mc_col:>12} {reference:>12.4e} {ratio:>10}",
            analytic
        );
    };
    row(
        "arrival time dispersion (s)",
        budget.arrival_time_dispersion,
        mc.and_then(|m| m.empirical_arrival_time_dispersion),
        REFERENCE_ARRIVAL_TIME_DISPERSION,
    );
    row(
        "velocity dispersion (m/s)",
        budget.velocity_resolution,
        mc.and_then(|m| m.empirical_velocity_dispersion),
        REFERENCE_VELOCITY_RESOLUTION,
    );
    row(
        "dispersion product (ħ)",
        budget.dispersion_product_over_hbar,
        mc.and_then(|m| m.empirical_product_over_hbar),
        REFERENCE_PRODUCT_OVER_HBAR,
    );
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "dispersion product: {:.3e} J·s = ħ/{:.1} (reference ħ/17)",
        budget.dispersion_product,
        1.0 / budget.dispersion_product_over_hbar
    );
    let _ = writeln!(
        out,
        "counting rate: {:.3e} counts/min (reference 0.1/min)",
        chain.final_rate_per_minute()
    );
    if let Some(m) = mc {
        let _ = writeln!(
            out,
            "monte carlo: {} accepted of {} sampled (acceptance {:.3e})",
            m.n_accepted, m.n_sampled, m.acceptance_fraction
        );
    }
    let _ = writeln!(out, "hbar = {:.6e} J·s", consts::HBAR);
    out
}

/// `report`: budget + Monte Carlo + rate in one document.
pub fn command_report(
    parsed: &ParsedConfig,
    events: u64,
    seed: u64,
    out_dir: Option<&Path>,
    stdout: &mut impl std::io::Write,
    stderr: &mut impl std::io::Write,
) -> Result<(), CliError> {
    notice_defaults(parsed, stderr);
    require_valid(&parsed.config)?;
    let budget = full_budget(&parsed.config).map_err(|e| CliError::Invalid(e.to_string()))?;
    let chain = paper_chain(&parsed.config, VelocityVolumeMode::Paper)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let mc = if events == 0 {
        None
    } else {
        let summary = run_simulation(&parsed.config, &RunPlan::accepted_target(events, seed))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        if summary.n_accepted == 0 {
            return Err(CliError::Runtime(format!(
                "no events accepted after {} samples",
                summary.n_sampled
            )));
        }
        Some(summary)
    };
    let text = render_report(&budget, mc.as_ref(), &chain);
    let _ = write!(stdout, "{text}");
    let mut sink = OutputSink::new(out_dir, RunManifest::new("report", parsed, seed));
    sink.write("report.txt", &text)?;
    sink.write(
        "report.json",
        &serde_json::to_string_pretty(&serde_json::json!({
            "budget": budget.to_json(),
            "monte_carlo": mc,
            "rate_chain": chain,
        }))
        .expect("report serializes"),
    )?;
    sink.finish()
}
