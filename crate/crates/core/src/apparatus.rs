//! Declarative apparatus description: geometry, slit, laser, spectrometer,
//! detector and trap parameters, with a validator for physical sanity.
//!
//! [`table1_default`] is the canonical configuration every other module is
//! checked against.

use crate::analytic_budget;
use crate::quantities::{li7_species, AtomSpecies};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Relative tolerance on the slit-sigma = width/4 tie.
pub const SLIT_SIGMA_RTOL: f64 = 1e-12;

/// A spectrometer resolution is only flagged once it exceeds the
/// linewidth-limited ceiling by this factor; the ceiling itself is
/// convention-dependent at the ~10% level.
pub const RESOLUTION_WARNING_SLACK: f64 = 1.5;

/// Flat apparatus parameter record. All values SI unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApparatusConfig {
    /// Slit-to-detector flight distance x, m.
    pub slit_to_detector_distance: f64,
    /// Slit width w in x, m.
    pub slit_width: f64,
    /// Slit position dispersion Δx_s = w/4, m.
    pub slit_position_sigma: f64,
    /// Detector plate x-position dispersion, m.
    pub detector_position_sigma: f64,
    /// Final Δx folding slit, detector and diffractive drift, m.
    pub total_position_sigma: f64,
    /// Exciting laser pulse duration, s.
    pub laser_pulse_duration: f64,
    /// Laser focusing divergence Δθ_x, rad.
    pub laser_divergence: f64,
    /// Trap ejection pulse rate, 1/s.
    pub pulse_rate: f64,
    /// Spectrometer resolving power R = λ/Δλ.
    pub spectrometer_resolution: f64,
    /// Fraction of the photon sphere the spectrometer accepts.
    pub spectrometer_solid_angle_fraction: f64,
    /// Maximum photon angle from the -x axis, rad.
    pub acceptance_half_angle: f64,
    /// Mean selected atom x-velocity <v_a>, m/s.
    pub mean_atom_x_velocity: f64,
    /// Atom z-velocity out of the trap, m/s.
    pub trap_z_velocity: f64,
    /// Trap temperature, K.
    pub trap_temperature: f64,
    /// Phase-space density, atoms·cm⁻³·(m/s)⁻³.
    pub trap_phase_space_density: f64,
    /// Slit length in y, m.
    pub slit_length_y: f64,
    /// Beam length ejected per pulse in z, m.
    pub beam_length_per_pulse_z: f64,
    /// Length of the post-slit region open to the spectrometer, m.
    pub emission_window_length: f64,
    /// Distance from the exciting beam to the slit, m.
    pub excitation_to_slit_distance: f64,
    /// Velocity resolution Δv_a the spectrometer chain is designed for, m/s.
    pub velocity_resolution: f64,
    /// Multiplier on the minimum-uncertainty diffraction kick.
    pub diffraction_shape_factor: f64,
    /// Photon-detector timing dispersion, s.
    pub photon_detector_time_sigma: f64,
    /// Spectrometer passband half-width, fractional wavelength.
    pub spectrometer_passband_fraction: f64,
    /// Natural-line sampler truncation, in HWHM units. The default is the
    /// point where the truncated profile's standard deviation equals its
    /// half-width; non-positive disables truncation.
    pub line_wing_cutoff: f64,
    /// Overrides the species-derived natural linewidth ΔE/E when set.
    pub natural_linewidth_fraction: Option<f64>,
    /// Overrides the Gaussian spectrometer noise sigma (fractional) when set.
    pub spectrometer_noise_fraction: Option<f64>,
    /// Permit slit_position_sigma != slit_width/4.
    pub slit_sigma_override: bool,
    pub species: AtomSpecies,
}

impl Default for ApparatusConfig {
    fn default() -> Self {
        table1_default()
    }
}

/// The canonical configuration: Table-I values plus the auxiliary
/// geometry and trap numbers quoted alongside it.
pub fn table1_default() -> ApparatusConfig {
    ApparatusConfig {
        slit_to_detector_distance: 0.01,
        slit_width: 2e-8,
        slit_position_sigma: 0.5e-8,
        detector_position_sigma: 0.5e-8,
        total_position_sigma: 1.0e-8,
        laser_pulse_duration: 1e-5,
        laser_divergence: 0.05,
        pulse_rate: 100.0,
        spectrometer_resolution: 7e9,
        spectrometer_solid_angle_fraction: 3e-4,
        acceptance_half_angle: 2.7e-2,
        mean_atom_x_velocity: 1.0,
        trap_z_velocity: 10.0,
        trap_temperature: 100e-9,
        trap_phase_space_density: 2e17,
        slit_length_y: 1e-4,
        beam_length_per_pulse_z: 1e-4,
        emission_window_length: 2e-6,
        excitation_to_slit_distance: 8e-6,
        velocity_resolution: 0.05,
        diffraction_shape_factor: 1.0,
        photon_detector_time_sigma: 0.0,
        spectrometer_passband_fraction: 1.0 / 7e9,
        line_wing_cutoff: LINE_WING_CUTOFF_DEFAULT,
        natural_linewidth_fraction: None,
        spectrometer_noise_fraction: None,
        slit_sigma_override: false,
        species: li7_species(),
    }
}

/// Solution of k = 2·atan(k): truncating a Lorentzian at ±k half-widths
/// makes its standard deviation equal to the half-width.
pub const LINE_WING_CUTOFF_DEFAULT: f64 = 2.3311;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub field: String,
    pub severity: Severity,
    pub message: String,
}

/// Outcome of [`validate`]: the config is accepted iff there are no
/// error-severity issues.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConfigValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ConfigValidationReport {
    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    fn error(&mut self, field: &str, message: impl Into<String>) {
        self.issues.push(ValidationIssue {
            field: field.to_string(),
            severity: Severity::Error,
            message: message.into(),
        });
    }

    fn warning(&mut self, field: &str, message: impl Into<String>) {
        self.issues.push(ValidationIssue {
            field: field.to_string(),
            severity: Severity::Warning,
            message: message.into(),
        });
    }
}

impl fmt::Display for ConfigValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            let tag = match issue.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            writeln!(f, "{tag}: {}: {}", issue.field, issue.message)?;
        }
        Ok(())
    }
}

/// Check every invariant of the configuration; reports, never panics.
pub fn validate(config: &ApparatusConfig) -> ConfigValidationReport {
    let mut report = ConfigValidationReport::default();

    let positives = [
        ("slit_to_detector_distance", config.slit_to_detector_distance),
        ("slit_width", config.slit_width),
        ("slit_position_sigma", config.slit_position_sigma),
        ("detector_position_sigma", config.detector_position_sigma),
        ("total_position_sigma", config.total_position_sigma),
        ("laser_pulse_duration", config.laser_pulse_duration),
        ("laser_divergence", config.laser_divergence),
        ("pulse_rate", config.pulse_rate),
        ("mean_atom_x_velocity", config.mean_atom_x_velocity),
        ("trap_z_velocity", config.trap_z_velocity),
        ("trap_temperature", config.trap_temperature),
        ("trap_phase_space_density", config.trap_phase_space_density),
        ("slit_length_y", config.slit_length_y),
        ("beam_length_per_pulse_z", config.beam_length_per_pulse_z),
        ("emission_window_length", config.emission_window_length),
        ("excitation_to_slit_distance", config.excitation_to_slit_distance),
        ("velocity_resolution", config.velocity_resolution),
        ("diffraction_shape_factor", config.diffraction_shape_factor),
        ("spectrometer_passband_fraction", config.spectrometer_passband_fraction),
    ];
    for (name, value) in positives {
        if !value.is_finite() || value <= 0.0 {
            report.error(name, format!("must be positive and finite, got {value}"));
        }
    }

    if !config.photon_detector_time_sigma.is_finite() || config.photon_detector_time_sigma < 0.0 {
        report.error(
            "photon_detector_time_sigma",
            format!("must be >= 0, got {}", config.photon_detector_time_sigma),
        );
    }
    if config.spectrometer_resolution <= 1.0 || !config.spectrometer_resolution.is_finite() {
        report.error(
            "spectrometer_resolution",
            format!("must exceed 1, got {}", config.spectrometer_resolution),
        );
    }
    let frac = config.spectrometer_solid_angle_fraction;
    if !(frac > 0.0 && frac < 1.0) {
        report.error(
            "spectrometer_solid_angle_fraction",
            format!("must lie in (0, 1), got {frac}"),
        );
    }
    let theta = config.acceptance_half_angle;
    if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
        report.error("acceptance_half_angle", format!("must lie in (0, π/2), got {theta}"));
    }
    if !config.line_wing_cutoff.is_finite() {
        report.error("line_wing_cutoff", "must be finite (non-positive disables truncation)");
    }
    for (name, value) in [
        ("natural_linewidth_fraction", config.natural_linewidth_fraction),
        ("spectrometer_noise_fraction", config.spectrometer_noise_fraction),
    ] {
        if let Some(v) = value {
            if !v.is_finite() || v < 0.0 {
                report.error(name, format!("override must be >= 0, got {v}"));
            }
        }
    }

    if config.species.mass <= 0.0 {
        report.error("species.mass", "must be positive");
    }
    if config.species.lifetime <= 0.0 {
        report.error("species.lifetime", "must be positive");
    }

    if !config.slit_sigma_override && config.slit_width > 0.0 {
        let expected = config.slit_width / 4.0;
        let rel = ((config.slit_position_sigma - expected) / expected).abs();
        if rel > SLIT_SIGMA_RTOL {
            report.error(
                "slit_position_sigma",
                format!(
                    "must equal slit_width/4 = {expected:e} (got {:e}); \
                     set slit_sigma_override to relax",
                    config.slit_position_sigma
                ),
            );
        }
    }

    let max_component = config.slit_position_sigma.max(config.detector_position_sigma);
    if config.total_position_sigma < max_component {
        report.error(
            "total_position_sigma",
            format!(
                "quadrature total {:e} cannot be below its largest component {max_component:e}",
                config.total_position_sigma
            ),
        );
    }

    if config.species.lifetime > 0.0 && config.species.transition_energy > 0.0 {
        let ceiling = analytic_budget::max_useful_resolution(&config.species);
        if config.spectrometer_resolution > RESOLUTION_WARNING_SLACK * ceiling {
            report.warning(
                "spectrometer_resolution",
                format!(
                    "R = {:.3e} exceeds the linewidth-limited ceiling {ceiling:.3e}",
                    config.spectrometer_resolution
                ),
            );
        }
    }

    report
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown apparatus field `{name}`{}", suggestion.as_ref().map(|s| format!(", did you mean `{s}`?")).unwrap_or_default())]
pub struct UnknownField {
    pub name: String,
    pub suggestion: Option<String>,
}

/// Numeric fields addressable by name in sweeps and config files.
pub const NUMERIC_FIELDS: &[&str] = &[
    "slit_to_detector_distance",
    "slit_width",
    "slit_position_sigma",
    "detector_position_sigma",
    "total_position_sigma",
    "laser_pulse_duration",
    "laser_divergence",
    "pulse_rate",
    "spectrometer_resolution",
    "spectrometer_solid_angle_fraction",
    "acceptance_half_angle",
    "mean_atom_x_velocity",
    "trap_z_velocity",
    "trap_temperature",
    "trap_phase_space_density",
    "slit_length_y",
    "beam_length_per_pulse_z",
    "emission_window_length",
    "excitation_to_slit_distance",
    "velocity_resolution",
    "diffraction_shape_factor",
    "photon_detector_time_sigma",
    "spectrometer_passband_fraction",
    "line_wing_cutoff",
];

impl ApparatusConfig {
    pub fn get_field(&self, name: &str) -> Result<f64, UnknownField> {
        let v = match name {
            "slit_to_detector_distance" => self.slit_to_detector_distance,
            "slit_width" => self.slit_width,
            "slit_position_sigma" => self.slit_position_sigma,
            "detector_position_sigma" => self.detector_position_sigma,
            "total_position_sigma" => self.total_position_sigma,
            "laser_pulse_duration" => self.laser_pulse_duration,
            "laser_divergence" => self.laser_divergence,
            "pulse_rate" => self.pulse_rate,
            "spectrometer_resolution" => self.spectrometer_resolution,
            "spectrometer_solid_angle_fraction" => self.spectrometer_solid_angle_fraction,
            "acceptance_half_angle" => self.acceptance_half_angle,
            "mean_atom_x_velocity" => self.mean_atom_x_velocity,
            "trap_z_velocity" => self.trap_z_velocity,
            "trap_temperature" => self.trap_temperature,
            "trap_phase_space_density" => self.trap_phase_space_density,
            "slit_length_y" => self.slit_length_y,
            "beam_length_per_pulse_z" => self.beam_length_per_pulse_z,
            "emission_window_length" => self.emission_window_length,
            "excitation_to_slit_distance" => self.excitation_to_slit_distance,
            "velocity_resolution" => self.velocity_resolution,
            "diffraction_shape_factor" => self.diffraction_shape_factor,
            "photon_detector_time_sigma" => self.photon_detector_time_sigma,
            "spectrometer_passband_fraction" => self.spectrometer_passband_fraction,
            "line_wing_cutoff" => self.line_wing_cutoff,
            _ => return Err(unknown_field(name)),
        };
        Ok(v)
    }

    /// Set a numeric field by name. Setting `slit_width` or
    /// `slit_position_sigma` keeps the w = 4·Δx_s tie unless
    /// `slit_sigma_override` is set.
    pub fn set_field(&mut self, name: &str, value: f64) -> Result<(), UnknownField> {
        match name {
            "slit_to_detector_distance" => self.slit_to_detector_distance = value,
            "slit_width" => {
                self.slit_width = value;
                if !self.slit_sigma_override {
                    self.slit_position_sigma = value / 4.0;
                }
            }
            "slit_position_sigma" => {
                self.slit_position_sigma = value;
                if !self.slit_sigma_override {
                    self.slit_width = value * 4.0;
                }
            }
            "detector_position_sigma" => self.detector_position_sigma = value,
            "total_position_sigma" => self.total_position_sigma = value,
            "laser_pulse_duration" => self.laser_pulse_duration = value,
            "laser_divergence" => self.laser_divergence = value,
            "pulse_rate" => self.pulse_rate = value,
            "spectrometer_resolution" => self.spectrometer_resolution = value,
            "spectrometer_solid_angle_fraction" => self.spectrometer_solid_angle_fraction = value,
            "acceptance_half_angle" => self.acceptance_half_angle = value,
            "mean_atom_x_velocity" => self.mean_atom_x_velocity = value,
            "trap_z_velocity" => self.trap_z_velocity = value,
            "trap_temperature" => self.trap_temperature = value,
            "trap_phase_space_density" => self.trap_phase_space_density = value,
            "slit_length_y" => self.slit_length_y = value,
            "beam_length_per_pulse_z" => self.beam_length_per_pulse_z = value,
            "emission_window_length" => self.emission_window_length = value,
            "excitation_to_slit_distance" => self.excitation_to_slit_distance = value,
            "velocity_resolution" => self.velocity_resolution = value,
            "diffraction_shape_factor" => self.diffraction_shape_factor = value,
            "photon_detector_time_sigma" => self.photon_detector_time_sigma = value,
            "spectrometer_passband_fraction" => self.spectrometer_passband_fraction = value,
            "line_wing_cutoff" => self.line_wing_cutoff = value,
            _ => return Err(unknown_field(name)),
        }
        Ok(())
    }
}

fn unknown_field(name: &str) -> UnknownField {
    UnknownField { name: name.to_string(), suggestion: nearest_field(name) }
}

/// Closest known field by edit distance, for typo diagnostics.
pub fn nearest_field(name: &str) -> Option<String> {
    NUMERIC_FIELDS
        .iter()
        .chain(["species", "natural_linewidth_fraction", "spectrometer_noise_fraction",
                "slit_sigma_override"].iter())
        .map(|f| (edit_distance(name, f), *f))
        .min()
        .filter(|(d, f)| *d <= f.len().max(name.len()) / 2)
        .map(|(_, f)| f.to_string())
}

fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j] + cost).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
