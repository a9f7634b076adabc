//! Per-event simulation of the measurement chain: sample ground truth for
//! each excited atom, simulate the photon measurement, form the
//! momentum-conservation prediction, and accumulate prediction-minus-truth
//! residuals into empirical dispersions.
//!
//! Runs are a pure function of (config, plan): batches draw from
//! independent counter-derived random streams and are merged in fixed batch
//! order, so results do not depend on how many workers execute them.

use crate::analytic_budget::{linewidth_fraction, recoil_velocity};
use crate::apparatus::{validate, ApparatusConfig, ConfigValidationReport};
use crate::quantities::consts;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Events per random-stream batch.
pub const BATCH_SIZE: u64 = 1 << 14;
/// Batches evaluated per scheduling round in target-accepted mode.
const BATCHES_PER_ROUND: u64 = 64;
/// Hard cap on raw samples in target-accepted mode.
pub const MAX_SAMPLES: u64 = 1_000_000_000;

#[derive(Debug, Error)]
pub enum McError {
    #[error("configuration rejected:\n{0}")]
    InvalidConfig(ConfigValidationReport),
    #[error("event count must be at least 1")]
    NoEventsRequested,
}

/// How photon directions are drawn.
///
/// `ConeOnly` samples directions uniformly over the acceptance cap, which
/// is the distribution of accepted events under full-sphere sampling; the
/// geometric factor (1 − cos θ_max)/2 is folded into the reported
/// acceptance fraction analytically. `FullSphere` samples the whole sphere
/// and measures the cone cut empirically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionSampling {
    FullSphere,
    ConeOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopRule {
    /// Fixed number of raw sampled events.
    Samples(u64),
    /// Sample until at least this many accepted events (round-granular,
    /// capped at [`MAX_SAMPLES`]).
    Accepted(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub stop: StopRule,
    pub seed: u64,
    pub direction: DirectionSampling,
    /// Hard ceiling on raw samples for accepted-target runs.
    #[serde(default = "default_max_samples")]
    pub max_samples: u64,
}

fn default_max_samples() -> u64 {
    MAX_SAMPLES
}

impl RunPlan {
    pub fn samples(n: u64, seed: u64) -> RunPlan {
        RunPlan {
            stop: StopRule::Samples(n),
            seed,
            direction: DirectionSampling::FullSphere,
            max_samples: MAX_SAMPLES,
        }
    }

    pub fn accepted_target(n: u64, seed: u64) -> RunPlan {
        RunPlan {
            stop: StopRule::Accepted(n),
            seed,
            direction: DirectionSampling::ConeOnly,
            max_samples: MAX_SAMPLES,
        }
    }

    pub fn with_max_samples(mut self, max_samples: u64) -> RunPlan {
        self.max_samples = max_samples;
        self
    }
}

/// One sampled atom: ground truth, the simulated measurement, and the
/// prediction formed from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub true_emission_time: f64,
    pub true_slit_x: f64,
    pub true_vx_pre_emission: f64,
    pub photon_direction: [f64; 3],
    /// Fractional wavelength shift v·k̂/c plus line and instrument noise.
    pub measured_wavelength_shift: f64,
    /// Pre-emission x-velocity inferred assuming emission exactly along -x̂.
    pub inferred_vx: f64,
    pub predicted_arrival_time: f64,
    pub true_arrival_time: f64,
    pub accepted: bool,
}

/// Scalar parameters derived once from a validated config.
#[derive(Debug, Clone)]
pub struct EventParams {
    pulse: f64,
    tau: f64,
    slit_half_width: f64,
    sigma_thermal: f64,
    sigma_kick: f64,
    recoil: f64,
    cos_theta_max: f64,
    /// Natural-line HWHM in velocity units (c × fractional).
    line_gamma_v: f64,
    /// Uniform half-range feeding the truncated-Lorentzian inverse CDF.
    line_u_max: f64,
    /// Spectrometer Gaussian sigma in velocity units.
    sigma_spec_v: f64,
    /// Pre-emission velocity the passband is centered on.
    v_setpoint_pre: f64,
    /// Passband half-width in velocity units.
    passband_half_v: f64,
    flight_distance: f64,
    vz: f64,
    excite_to_slit: f64,
    window: f64,
    detector_time_sigma: f64,
}

impl EventParams {
    pub fn from_config(config: &ApparatusConfig) -> Result<EventParams, McError> {
        let report = validate(config);
        if report.has_errors() {
            return Err(McError::InvalidConfig(report));
        }
        let sp = &config.species;
        let gamma_frac = config
            .natural_linewidth_fraction
            .unwrap_or_else(|| linewidth_fraction(sp));
        let spec_frac = config
            .spectrometer_noise_fraction
            .unwrap_or(1.0 / config.spectrometer_resolution / 2.355);
        let cutoff = config.line_wing_cutoff;
        let line_u_max = if cutoff > 0.0 {
            cutoff.atan() / std::f64::consts::PI
        } else {
            0.5
        };
        Ok(EventParams {
            pulse: config.laser_pulse_duration,
            tau: sp.lifetime,
            slit_half_width: config.slit_width / 2.0,
            sigma_thermal: (consts::K_B * config.trap_temperature / sp.mass).sqrt(),
            sigma_kick: config.diffraction_shape_factor * consts::HBAR
                / (2.0 * sp.mass * config.slit_position_sigma),
            recoil: recoil_velocity(sp).magnitude,
            cos_theta_max: config.acceptance_half_angle.cos(),
            line_gamma_v: consts::C * gamma_frac,
            line_u_max,
            sigma_spec_v: consts::C * spec_frac,
            v_setpoint_pre: config.mean_atom_x_velocity - recoil_velocity(sp).magnitude,
            passband_half_v: consts::C * config.spectrometer_passband_fraction,
            flight_distance: config.slit_to_detector_distance,
            vz: config.trap_z_velocity,
            excite_to_slit: config.excitation_to_slit_distance,
            window: config.emission_window_length,
            detector_time_sigma: config.photon_detector_time_sigma,
        })
    }

    /// Fraction of the photon sphere inside the acceptance cone.
    pub fn cone_cap_fraction(&self) -> f64 {
        (1.0 - self.cos_theta_max) / 2.0
    }
}

/// Gate outcomes for one event, kept separately from the record so batch
/// counters can attribute losses per gate.
#[derive(Debug, Clone, Copy)]
pub struct EventGates {
    pub in_cone: bool,
    pub in_window: bool,
    pub in_passband: bool,
    pub reaches_detector: bool,
}

/// Draw one event. Consumes a fixed sequence of draws so that two configs
/// differing only in cut parameters see identical ground truth.
pub fn sample_event<R: Rng>(
    params: &EventParams,
    direction: DirectionSampling,
    rng: &mut R,
) -> EventRecord {
    sample_event_with_gates(params, direction, rng).0
}

pub fn sample_event_with_gates<R: Rng>(
    params: &EventParams,
    direction: DirectionSampling,
    rng: &mut R,
) -> (EventRecord, EventGates) {
    let exp = Exp::new(1.0 / params.tau).expect("positive lifetime");

    let excite_time: f64 = rng.random::<f64>() * params.pulse;
    let decay_delay: f64 = exp.sample(rng);
    let emission_time = excite_time + decay_delay;
    let slit_x = (rng.random::<f64>() - 0.5) * 2.0 * params.slit_half_width;
    let thermal: f64 = rng.sample::<f64, _>(StandardNormal) * params.sigma_thermal;
    let kick: f64 = rng.sample::<f64, _>(StandardNormal) * params.sigma_kick;
    let vx_pre = thermal + kick;

    // photon direction: k_x, then azimuth for the transverse part
    let cos_to_minus_x: f64 = match direction {
        DirectionSampling::FullSphere => rng.random::<f64>() * 2.0 - 1.0,
        DirectionSampling::ConeOnly => {
            params.cos_theta_max + rng.random::<f64>() * (1.0 - params.cos_theta_max)
        }
    };
    let phi = rng.random::<f64>() * std::f64::consts::TAU;
    let sin_to_minus_x = (1.0 - cos_to_minus_x * cos_to_minus_x).max(0.0).sqrt();
    let k = [-cos_to_minus_x, sin_to_minus_x * phi.cos(), sin_to_minus_x * phi.sin()];
    let in_cone = cos_to_minus_x >= params.cos_theta_max;

    // emission must happen inside the screened window past the slit
    let z_at_decay = params.vz * decay_delay;
    let in_window = z_at_decay >= params.excite_to_slit
        && z_at_decay <= params.excite_to_slit + params.window;

    // Doppler measurement: line offset (truncated Lorentzian) plus
    // instrument response, all in fractional-wavelength units
    let line_u: f64 = (rng.random::<f64>() - 0.5) * 2.0 * params.line_u_max;
    let line_v = params.line_gamma_v * (std::f64::consts::PI * line_u).tan();
    let spec_v: f64 = rng.sample::<f64, _>(StandardNormal) * params.sigma_spec_v;
    let shift = (vx_pre * k[0] + line_v + spec_v) / consts::C;
    let inferred_vx = -shift * consts::C;
    let in_passband = (inferred_vx - params.v_setpoint_pre).abs() <= params.passband_half_v;

    let v_post_true = vx_pre - params.recoil * k[0];
    let v_post_pred = inferred_vx + params.recoil;
    let detector_noise: f64 =
        rng.sample::<f64, _>(StandardNormal) * params.detector_time_sigma;

    let reaches_detector = v_post_true > 0.0 && v_post_pred > 0.0;
    let true_arrival_time = if v_post_true > 0.0 {
        emission_time + (params.flight_distance - slit_x) / v_post_true
    } else {
        f64::INFINITY
    };
    let predicted_arrival_time = if v_post_pred > 0.0 {
        params.flight_distance / v_post_pred + detector_noise
    } else {
        f64::INFINITY
    };

    let record = EventRecord {
        true_emission_time: emission_time,
        true_slit_x: slit_x,
        true_vx_pre_emission: vx_pre,
        photon_direction: k,
        measured_wavelength_shift: shift,
        inferred_vx,
        predicted_arrival_time,
        true_arrival_time,
        accepted: in_cone && in_window && in_passband && reaches_detector,
    };
    (record, EventGates { in_cone, in_window, in_passband, reaches_detector })
}

/// Streaming (count, mean, M2) moments with exact pairwise merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let na = self.n as f64;
        let nb = other.n as f64;
        self.m2 += other.m2 + delta * delta * na * nb / (na + nb);
        self.mean += delta * nb / (na + nb);
        self.n = n;
    }

    fn std(&self) -> Option<f64> {
        if self.n < 2 {
            return None;
        }
        Some((self.m2 / (self.n as f64 - 1.0)).sqrt())
    }
}

#[derive(Debug, Clone, Default)]
struct BatchResult {
    n_sampled: u64,
    n_cone: u64,
    n_window: u64,
    n_accepted: u64,
    time_res: Moments,
    vel_res: Moments,
    true_velocity: Moments,
    time_residuals: Vec<f64>,
}

fn batch_rng(seed: u64, batch_index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&batch_index.to_le_bytes());
    key[16..24].copy_from_slice(&0x9e37_79b9_7f4a_7c15u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn run_batch(
    params: &EventParams,
    direction: DirectionSampling,
    seed: u64,
    batch_index: u64,
    n_events: u64,
) -> BatchResult {
    let mut rng = batch_rng(seed, batch_index);
    let mut out = BatchResult { n_sampled: n_events, ..Default::default() };
    for _ in 0..n_events {
        let (ev, gates) = sample_event_with_gates(params, direction, &mut rng);
        out.n_cone += u64::from(gates.in_cone);
        out.n_window += u64::from(gates.in_window);
        out.n_accepted += u64::from(ev.accepted);
        if ev.accepted {
            let rt = ev.predicted_arrival_time - ev.true_arrival_time;
            let rv = (ev.inferred_vx + params.recoil)
                - (ev.true_vx_pre_emission - params.recoil * ev.photon_direction[0]);
            out.time_res.push(rt);
            out.vel_res.push(rv);
            out.true_velocity
                .push(ev.true_vx_pre_emission - params.recoil * ev.photon_direction[0]);
            out.time_residuals.push(rt);
        }
    }
    out
}

/// Histogram over residuals: equal-width bins spanning ±5σ about the mean,
/// with out-of-range values clamped into the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// n_bins + 1 edges, seconds.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn from_residuals(residuals: &[f64], n_bins: usize) -> Histogram {
        assert!(n_bins >= 1, "n_bins must be at least 1");
        if residuals.is_empty() {
            return Histogram { bin_edges: vec![0.0, 0.0], counts: vec![0] };
        }
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        let sigma = var.sqrt();
        if sigma == 0.0 || n_bins == 1 {
            return Histogram {
                bin_edges: vec![mean - sigma.max(f64::MIN_POSITIVE), mean + sigma.max(f64::MIN_POSITIVE)],
                counts: vec![residuals.len() as u64],
            };
        }
        let lo = mean - 5.0 * sigma;
        let hi = mean + 5.0 * sigma;
        let width = (hi - lo) / n_bins as f64;
        let bin_edges: Vec<f64> = (0..=n_bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0u64; n_bins];
        for &r in residuals {
            let idx = (((r - lo) / width).floor() as i64).clamp(0, n_bins as i64 - 1);
            counts[idx as usize] += 1;
        }
        Histogram { bin_edges, counts }
    }
}

/// Aggregated simulation output. Empirical dispersions are `None` when
/// fewer than two events were accepted (the no-statistics case).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub n_sampled: u64,
    pub n_accepted: u64,
    /// Standard deviation of (predicted − true) arrival time, s.
    pub empirical_arrival_time_dispersion: Option<f64>,
    /// Standard deviation of (predicted − true) post-emission x-velocity, m/s.
    pub empirical_velocity_dispersion: Option<f64>,
    /// m·Δv·Δx/ħ using the empirical Δv and the configured Δx.
    pub empirical_product_over_hbar: Option<f64>,
    /// Overall accepted fraction, cone factor included in both modes.
    pub acceptance_fraction: f64,
    /// Empirical cone fraction; only measured under full-sphere sampling.
    pub cone_acceptance: Option<f64>,
    /// Fraction of decays landing inside the screened emission window.
    pub window_acceptance: f64,
    /// Mean true post-emission x-velocity of accepted atoms, m/s.
    pub mean_true_velocity: Option<f64>,
    pub direction: DirectionSampling,
    pub seed: u64,
    pub residual_histogram: Histogram,
    #[serde(skip)]
    time_residuals: Vec<f64>,
}

impl SimulationSummary {
    /// Accepted-event time residuals, in canonical batch order. Empty on a
    /// summary read back from JSON.
    pub fn time_residuals(&self) -> &[f64] {
        &self.time_residuals
    }
}

/// Histogram of arrival-time residuals with a chosen bin count.
pub fn residual_histogram(summary: &SimulationSummary, n_bins: usize) -> Histogram {
    Histogram::from_residuals(&summary.time_residuals, n_bins)
}

/// Default bin count for the summary histogram.
pub const DEFAULT_HISTOGRAM_BINS: usize = 40;

/// Run the simulation. Deterministic in (config, plan) regardless of how
/// many rayon workers execute the batches.
pub fn run_simulation(
    config: &ApparatusConfig,
    plan: &RunPlan,
) -> Result<SimulationSummary, McError> {
    let params = EventParams::from_config(config)?;
    let mass = config.species.mass;
    let dx_total = config.total_position_sigma;

    let mut batches: Vec<BatchResult> = Vec::new();
    match plan.stop {
        StopRule::Samples(n) => {
            if n == 0 {
                return Err(McError::NoEventsRequested);
            }
            let n_batches = n.div_ceil(BATCH_SIZE);
            batches = (0..n_batches)
                .into_par_iter()
                .map(|b| {
                    let count = BATCH_SIZE.min(n - b * BATCH_SIZE);
                    run_batch(&params, plan.direction, plan.seed, b, count)
                })
                .collect();
        }
        StopRule::Accepted(target) => {
            if target == 0 {
                return Err(McError::NoEventsRequested);
            }
            let mut accepted: u64 = 0;
            let mut sampled: u64 = 0;
            let mut next_batch: u64 = 0;
            while accepted < target && sampled < plan.max_samples.min(MAX_SAMPLES) {
                let round: Vec<BatchResult> = (next_batch..next_batch + BATCHES_PER_ROUND)
                    .into_par_iter()
                    .map(|b| run_batch(&params, plan.direction, plan.seed, b, BATCH_SIZE))
                    .collect();
                next_batch += BATCHES_PER_ROUND;
                for b in &round {
                    accepted += b.n_accepted;
                    sampled += b.n_sampled;
                }
                batches.extend(round);
            }
        }
    }

    // canonical fixed-order merge
    let mut n_sampled = 0u64;
    let mut n_cone = 0u64;
    let mut n_window = 0u64;
    let mut n_accepted = 0u64;
    let mut time_res = Moments::default();
    let mut vel_res = Moments::default();
    let mut true_vel = Moments::default();
    let mut residuals: Vec<f64> = Vec::new();
    for b in &batches {
        n_sampled += b.n_sampled;
        n_cone += b.n_cone;
        n_window += b.n_window;
        n_accepted += b.n_accepted;
        time_res.merge(&b.time_res);
        vel_res.merge(&b.vel_res);
        true_vel.merge(&b.true_velocity);
        residuals.extend_from_slice(&b.time_residuals);
    }

    let raw_fraction = if n_sampled > 0 { n_accepted as f64 / n_sampled as f64 } else { 0.0 };
    let acceptance_fraction = match plan.direction {
        DirectionSampling::FullSphere => raw_fraction,
        DirectionSampling::ConeOnly => raw_fraction * params.cone_cap_fraction(),
    };
    let empirical_dv = vel_res.std();
    Ok(SimulationSummary {
        n_sampled,
        n_accepted,
        empirical_arrival_time_dispersion: time_res.std(),
        empirical_velocity_dispersion: empirical_dv,
        empirical_product_over_hbar: empirical_dv.map(|dv| mass * dv * dx_total / consts::HBAR),
        acceptance_fraction,
        cone_acceptance: match plan.direction {
            DirectionSampling::FullSphere if n_sampled > 0 => {
                Some(n_cone as f64 / n_sampled as f64)
            }
            _ => None,
        },
        window_acceptance: if n_sampled > 0 { n_window as f64 / n_sampled as f64 } else { 0.0 },
        mean_true_velocity: if true_vel.n > 0 { Some(true_vel.mean) } else { None },
        direction: plan.direction,
        seed: plan.seed,
        residual_histogram: Histogram::from_residuals(&residuals, DEFAULT_HISTOGRAM_BINS),
        time_residuals: residuals,
    })
}
