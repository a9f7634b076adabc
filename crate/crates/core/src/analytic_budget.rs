//! Closed-form uncertainty budget for the measurement chain: arrival-time
//! dispersion, velocity resolution, recoil and linewidth arithmetic, ending
//! in the dispersion product Δp·Δx.
//!
//! All operations take and return dimension-checked [`Quantity`] values;
//! [`full_budget`] composes them over an [`ApparatusConfig`].

use crate::apparatus::{validate, ApparatusConfig, ConfigValidationReport};
use crate::quantities::{consts, AtomSpecies, Dim, Quantity, QuantityError};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BudgetError {
    #[error(transparent)]
    Quantity(#[from] QuantityError),
    #[error("{what} must be positive, got {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("configuration rejected:\n{0}")]
    InvalidConfig(ConfigValidationReport),
}

fn positive(what: &'static str, q: Quantity, dim: Dim) -> Result<f64, BudgetError> {
    let v = q.expect_dim(dim).map_err(BudgetError::Quantity)?;
    if v <= 0.0 {
        return Err(BudgetError::Domain { what, value: v });
    }
    Ok(v)
}

fn non_negative(what: &'static str, q: Quantity, dim: Dim) -> Result<f64, BudgetError> {
    let v = q.expect_dim(dim).map_err(BudgetError::Quantity)?;
    if v < 0.0 {
        return Err(BudgetError::Domain { what, value: v });
    }
    Ok(v)
}

/// Dispersion of the emission time: half the exciting-pulse duration plus
/// half the excited-state decay time.
pub fn initial_time_dispersion(
    pulse_duration: Quantity,
    lifetime: Quantity,
) -> Result<Quantity, BudgetError> {
    let p = positive("pulse_duration", pulse_duration, Dim::TIME)?;
    let tau = positive("lifetime", lifetime, Dim::TIME)?;
    Ok(Quantity { magnitude: 0.5 * p + 0.5 * tau, dim: Dim::TIME })
}

/// Arrival-time dispersion at the atom detector: quadrature of the initial
/// time spread, the slit-transit term Δx_s/v_a, and the velocity-spread
/// term x·Δv_a/v_a².
pub fn arrival_time_dispersion(
    initial_time: Quantity,
    slit_sigma: Quantity,
    atom_velocity: Quantity,
    flight_distance: Quantity,
    velocity_dispersion: Quantity,
) -> Result<Quantity, BudgetError> {
    let dt_i = non_negative("initial_time", initial_time, Dim::TIME)?;
    let dx_s = non_negative("slit_sigma", slit_sigma, Dim::LENGTH)?;
    let v = positive("atom_velocity", atom_velocity, Dim::VELOCITY)?;
    let x = positive("flight_distance", flight_distance, Dim::LENGTH)?;
    let dv = non_negative("velocity_dispersion", velocity_dispersion, Dim::VELOCITY)?;
    let t_slit = dx_s / v;
    let t_vel = x * dv / (v * v);
    Quantity::seconds((dt_i * dt_i + t_slit * t_slit + t_vel * t_vel).sqrt())
        .map_err(BudgetError::from)
}

/// Velocity resolution implied by an arrival-time dispersion: v_a²·Δt_a/x.
pub fn required_velocity_resolution(
    arrival_time_sigma: Quantity,
    atom_velocity: Quantity,
    flight_distance: Quantity,
) -> Result<Quantity, BudgetError> {
    let dt_a = non_negative("arrival_time_sigma", arrival_time_sigma, Dim::TIME)?;
    let v = positive("atom_velocity", atom_velocity, Dim::VELOCITY)?;
    let x = positive("flight_distance", flight_distance, Dim::LENGTH)?;
    Quantity::meters_per_second(v * v * dt_a / x).map_err(BudgetError::from)
}

/// Velocity spread imprinted by the focused exciting beam:
/// Δθ_x·E_photon/(c·m).
pub fn laser_focus_velocity_spread(
    divergence: Quantity,
    photon_energy: Quantity,
    mass: Quantity,
) -> Result<Quantity, BudgetError> {
    let dtheta = non_negative("divergence", divergence, Dim::NONE)?;
    let e = positive("photon_energy", photon_energy, Dim::ENERGY)?;
    let m = positive("mass", mass, Dim::MASS)?;
    Quantity::meters_per_second(dtheta * e / (consts::C * m)).map_err(BudgetError::from)
}

/// Single-photon recoil velocity E_photon/(c·m).
pub fn recoil_velocity(species: &AtomSpecies) -> Quantity {
    Quantity {
        magnitude: species.transition_energy / (consts::C * species.mass),
        dim: Dim::VELOCITY,
    }
}

/// Half-width convention for the natural linewidth: ΔE = ħ/(2τ),
/// i.e. the half-width of a Lorentzian of FWHM Γ = ħ/τ.
pub const LINEWIDTH_HALF_WIDTH_FACTOR: f64 = 0.5;

/// Fractional natural linewidth ΔE/E with an explicit width factor
/// (ΔE = factor·ħ/τ).
pub fn linewidth_fraction_with_factor(species: &AtomSpecies, factor: f64) -> f64 {
    factor * consts::HBAR / species.lifetime / species.transition_energy
}

/// Fractional natural linewidth ΔE/E = (ħ/2τ)/E.
pub fn linewidth_fraction(species: &AtomSpecies) -> f64 {
    linewidth_fraction_with_factor(species, LINEWIDTH_HALF_WIDTH_FACTOR)
}

/// Largest spectrometer resolving power the natural linewidth can exploit.
pub fn max_useful_resolution(species: &AtomSpecies) -> f64 {
    1.0 / linewidth_fraction(species)
}

/// Minimum-uncertainty velocity kick from confining the atom to Δx_s at
/// the slit: ħ/(2·m·Δx_s).
pub fn diffraction_velocity_spread(
    slit_sigma: Quantity,
    mass: Quantity,
) -> Result<Quantity, BudgetError> {
    let dx_s = positive("slit_sigma", slit_sigma, Dim::LENGTH)?;
    let m = positive("mass", mass, Dim::MASS)?;
    Quantity::meters_per_second(consts::HBAR / (2.0 * m * dx_s)).map_err(BudgetError::from)
}

/// First-order Doppler velocity resolution of a spectrometer of resolving
/// power R: δv = c/R.
pub fn spectrometer_velocity_resolution(resolving_power: f64) -> Result<Quantity, BudgetError> {
    if !(resolving_power > 1.0) {
        return Err(BudgetError::Domain { what: "resolving_power", value: resolving_power });
    }
    Quantity::meters_per_second(consts::C / resolving_power).map_err(BudgetError::from)
}

/// Worst-case x-velocity projection error over the acceptance cone:
/// v_a·(1 − cos θ_max).
pub fn acceptance_cosine_error(
    atom_velocity: Quantity,
    max_half_angle: Quantity,
) -> Result<Quantity, BudgetError> {
    let v = non_negative("atom_velocity", atom_velocity, Dim::VELOCITY)?;
    let theta = non_negative("max_half_angle", max_half_angle, Dim::NONE)?;
    if theta >= std::f64::consts::FRAC_PI_2 {
        return Err(BudgetError::Domain { what: "max_half_angle (< π/2)", value: theta });
    }
    Quantity::meters_per_second(v * (1.0 - theta.cos())).map_err(BudgetError::from)
}

/// Quadrature fold of the slit, detector and drift position dispersions.
pub fn total_position_sigma(
    slit_sigma: Quantity,
    detector_sigma: Quantity,
    drift_sigma: Quantity,
) -> Result<Quantity, BudgetError> {
    let a = non_negative("slit_sigma", slit_sigma, Dim::LENGTH)?;
    let b = non_negative("detector_sigma", detector_sigma, Dim::LENGTH)?;
    let c = non_negative("drift_sigma", drift_sigma, Dim::LENGTH)?;
    Quantity::meters((a * a + b * b + c * c).sqrt()).map_err(BudgetError::from)
}

/// Which of the three arrival-time terms dominates the quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominantTerm {
    InitialTime,
    SlitTransit,
    VelocitySpread,
}

impl fmt::Display for DominantTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DominantTerm::InitialTime => "initial_time",
            DominantTerm::SlitTransit => "slit_transit",
            DominantTerm::VelocitySpread => "velocity_spread",
        };
        f.write_str(s)
    }
}

/// Every derived dispersion of the closed-form budget, SI magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    /// Δt_i, s.
    pub initial_time_dispersion: f64,
    /// Diffraction velocity kick at the slit, m/s.
    pub diffraction_velocity_spread: f64,
    /// c/R, m/s.
    pub spectrometer_velocity_resolution: f64,
    /// Δv_exit from laser focusing, m/s.
    pub exit_velocity_spread: f64,
    /// Δv_a, m/s.
    pub velocity_resolution: f64,
    /// Δt_a, s.
    pub arrival_time_dispersion: f64,
    /// Δx folding slit, detector and drift, m.
    pub total_position_sigma: f64,
    /// Recoil velocity, m/s.
    pub recoil_velocity: f64,
    /// ΔE/E.
    pub linewidth_fraction: f64,
    /// Linewidth-limited resolving power.
    pub max_useful_resolution: f64,
    /// Worst-case cone projection error, m/s.
    pub acceptance_cosine_error: f64,
    /// m·Δv_a·Δx, J·s.
    pub dispersion_product: f64,
    /// Dispersion product in units of ħ.
    pub dispersion_product_over_hbar: f64,
    pub dominant_term: DominantTerm,
}

impl BudgetReport {
    /// JSON rendering with explicit units on every entry.
    pub fn to_json(&self) -> serde_json::Value {
        let uv = |v: f64, u: &str| serde_json::json!({"value": v, "unit": u});
        serde_json::json!({
            "initial_time_dispersion": uv(self.initial_time_dispersion, "s"),
            "diffraction_velocity_spread": uv(self.diffraction_velocity_spread, "m/s"),
            "spectrometer_velocity_resolution": uv(self.spectrometer_velocity_resolution, "m/s"),
            "exit_velocity_spread": uv(self.exit_velocity_spread, "m/s"),
            "velocity_resolution": uv(self.velocity_resolution, "m/s"),
            "arrival_time_dispersion": uv(self.arrival_time_dispersion, "s"),
            "total_position_sigma": uv(self.total_position_sigma, "m"),
            "recoil_velocity": uv(self.recoil_velocity, "m/s"),
            "linewidth_fraction": uv(self.linewidth_fraction, "1"),
            "max_useful_resolution": uv(self.max_useful_resolution, "1"),
            "acceptance_cosine_error": uv(self.acceptance_cosine_error, "m/s"),
            "dispersion_product": uv(self.dispersion_product, "J·s"),
            "dispersion_product_over_hbar": uv(self.dispersion_product_over_hbar, "1"),
            "dominant_term": self.dominant_term.to_string(),
        })
    }
}

impl fmt::Display for BudgetReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<36} {:>12.4e}  {}", "initial time dispersion", self.initial_time_dispersion, "s")?;
        writeln!(f, "{:<36} {:>12.4e}  {}", "diffraction velocity spread", self.diffraction_velocity_spread, "m/s")?;
        writeln!(f, "{:<36} {:>12.4e}  {}", "spectrometer velocity resolution", self.spectrometer_velocity_resolution, "m/s")?;
        writeln!(f, "{:<36} {:>12.4e}  {}", "exit velocity spread", self.exit_velocity_spread, "m/s")?;
        writeln!(f, "{:<36} {:>12.4e}  {}", "velocity resolution (Δv_a)", self.velocity_resolution, "m/s")?;
        writeln!(f, "{:<36} {:>12.4e}  {}", "arrival time dispersion (Δt_a)", self.arrival_time_dispersion, "s")?;
        writeln!(f, "{:<36} {:>12.4e}  {}", "total position sigma (Δx)", self.total_position_sigma, "m")?;
        writeln!(f, "{:<36} {:>12.4e}  {}", "recoil velocity", self.recoil_velocity, "m/s")?;
        writeln!(f, "{:<36} {:>12.4e}", "linewidth fraction ΔE/E", self.linewidth_fraction)?;
        writeln!(f, "{:<36} {:>12.4e}", "max useful resolution", self.max_useful_resolution)?;
        writeln!(f, "{:<36} {:>12.4e}  {}", "acceptance cosine error", self.acceptance_cosine_error, "m/s")?;
        writeln!(f, "{:<36} {:>12.4e}  {}", "dispersion product", self.dispersion_product, "J·s")?;
        writeln!(
            f,
            "{:<36} {:>12.4e}  (ħ/{:.1}, paper: ħ/17)",
            "dispersion product / ħ",
            self.dispersion_product_over_hbar,
            1.0 / self.dispersion_product_over_hbar
        )?;
        writeln!(f, "{:<36} {:>12}", "dominant term", self.dominant_term.to_string())?;
        Ok(())
    }
}

/// Compose the whole closed-form budget over a validated configuration.
///
/// Δv_a follows the Table-I chain: the configured velocity resolution
/// seeds Eq.-(1)-style arrival-time quadrature, and the reported Δv_a is
/// recovered from that Δt_a, keeping the two mutually consistent. The
/// c/R value is reported alongside for comparison.
pub fn full_budget(config: &ApparatusConfig) -> Result<BudgetReport, BudgetError> {
    let report = validate(config);
    if report.has_errors() {
        return Err(BudgetError::InvalidConfig(report));
    }
    let species = &config.species;
    let mass = Quantity::kilograms(species.mass)?;

    let dt_i = initial_time_dispersion(
        Quantity::seconds(config.laser_pulse_duration)?,
        Quantity::seconds(species.lifetime)?,
    )?;
    let v_a = Quantity::meters_per_second(config.mean_atom_x_velocity)?;
    let x = Quantity::meters(config.slit_to_detector_distance)?;
    let slit_sigma = Quantity::meters(config.slit_position_sigma)?;
    let dv_seed = Quantity::meters_per_second(config.velocity_resolution)?;

    let dt_a = arrival_time_dispersion(dt_i, slit_sigma, v_a, x, dv_seed)?;
    let dv_a = required_velocity_resolution(dt_a, v_a, x)?;

    let diffraction = diffraction_velocity_spread(slit_sigma, mass)?
        * config.diffraction_shape_factor;
    let spectrometer = spectrometer_velocity_resolution(config.spectrometer_resolution)?;
    let exit_spread = laser_focus_velocity_spread(
        Quantity::dimensionless(config.laser_divergence)?,
        Quantity::joules(species.transition_energy)?,
        mass,
    )?;
    let cosine = acceptance_cosine_error(
        v_a,
        Quantity::dimensionless(config.acceptance_half_angle)?,
    )?;

    let dx_total = Quantity::meters(config.total_position_sigma)?;
    let product = mass * dv_a * dx_total;
    let product_js = product.expect_dim(Dim::ACTION)?;

    // argmax over the three squared quadrature terms
    let t1 = dt_i.magnitude;
    let t2 = config.slit_position_sigma / config.mean_atom_x_velocity;
    let t3 = config.slit_to_detector_distance * config.velocity_resolution
        / (config.mean_atom_x_velocity * config.mean_atom_x_velocity);
    let dominant = if t1 >= t2 && t1 >= t3 {
        DominantTerm::InitialTime
    } else if t2 >= t3 {
        DominantTerm::SlitTransit
    } else {
        DominantTerm::VelocitySpread
    };

    Ok(BudgetReport {
        initial_time_dispersion: dt_i.magnitude,
        diffraction_velocity_spread: diffraction.magnitude,
        spectrometer_velocity_resolution: spectrometer.magnitude,
        exit_velocity_spread: exit_spread.magnitude,
        velocity_resolution: dv_a.magnitude,
        arrival_time_dispersion: dt_a.magnitude,
        total_position_sigma: dx_total.magnitude,
        recoil_velocity: recoil_velocity(species).magnitude,
        linewidth_fraction: linewidth_fraction(species),
        max_useful_resolution: max_useful_resolution(species),
        acceptance_cosine_error: cosine.magnitude,
        dispersion_product: product_js,
        dispersion_product_over_hbar: product_js / consts::HBAR,
        dominant_term: dominant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apparatus::table1_default;
    use crate::quantities::li7_species;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn s(v: f64) -> Quantity {
        Quantity::seconds(v).unwrap()
    }
    fn m(v: f64) -> Quantity {
        Quantity::meters(v).unwrap()
    }
    fn mps(v: f64) -> Quantity {
        Quantity::meters_per_second(v).unwrap()
    }

    #[test]
    fn initial_time_for_defaults() {
        let dt = initial_time_dispersion(s(1e-5), s(0.8e-6)).unwrap();
        assert_relative_eq!(dt.magnitude, 5.4e-6, max_relative = 1e-12);
        assert!(dt.magnitude <= 1e-5);
    }

    #[test]
    fn initial_time_limit_and_linearity() {
        let tau = 0.8e-6;
        let dt = initial_time_dispersion(s(1e-300), s(tau)).unwrap();
        assert_relative_eq!(dt.magnitude, tau / 2.0, max_relative = 1e-9);
        let a = 3e-6;
        let b = 7e-7;
        let one = initial_time_dispersion(s(a), s(b)).unwrap().magnitude;
        let two = initial_time_dispersion(s(2.0 * a), s(2.0 * b)).unwrap().magnitude;
        assert_relative_eq!(two, 2.0 * one, max_relative = 1e-12);
        assert!(initial_time_dispersion(s(0.0), s(tau)).is_err());
    }

    #[test]
    fn arrival_time_matches_table() {
        let dt = arrival_time_dispersion(s(5.4e-6), m(0.5e-8), mps(1.0), m(0.01), mps(0.05))
            .unwrap();
        assert_relative_eq!(dt.magnitude, 5.0e-4, max_relative = 1e-4);
    }

    #[test]
    fn arrival_time_zero_and_345() {
        let z = arrival_time_dispersion(s(0.0), m(0.0), mps(1.0), m(0.01), mps(0.0)).unwrap();
        assert_eq!(z.magnitude, 0.0);
        // two terms 3e-4 s and 4e-4 s, third zero
        let q = arrival_time_dispersion(s(3e-4), m(4e-4), mps(1.0), m(0.01), mps(0.0)).unwrap();
        assert_relative_eq!(q.magnitude, 5e-4, max_relative = 1e-12);
    }

    #[test]
    fn velocity_resolution_from_table() {
        let dv = required_velocity_resolution(s(5e-4), mps(1.0), m(0.01)).unwrap();
        assert_relative_eq!(dv.magnitude, 0.05, max_relative = 1e-12);
        assert_eq!(required_velocity_resolution(s(0.0), mps(1.0), m(0.01)).unwrap().magnitude, 0.0);
    }

    #[test]
    fn laser_focus_spread() {
        let dv = laser_focus_velocity_spread(
            Quantity::dimensionless(0.05).unwrap(),
            Quantity::joules(4.2e-19).unwrap(),
            Quantity::kilograms(1.165e-26).unwrap(),
        )
        .unwrap();
        assert!((dv.magnitude - 0.6e-2).abs() / 0.6e-2 < 0.05);
        assert_eq!(dv.dim, Dim::VELOCITY);
        let z = laser_focus_velocity_spread(
            Quantity::dimensionless(0.0).unwrap(),
            Quantity::joules(4.2e-19).unwrap(),
            Quantity::kilograms(1.165e-26).unwrap(),
        )
        .unwrap();
        assert_eq!(z.magnitude, 0.0);
    }

    #[test]
    fn laser_spread_factors_through_recoil() {
        let sp = li7_species();
        let dv = laser_focus_velocity_spread(
            Quantity::dimensionless(0.05).unwrap(),
            Quantity::joules(sp.transition_energy).unwrap(),
            Quantity::kilograms(sp.mass).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(dv.magnitude, 0.05 * recoil_velocity(&sp).magnitude,
                            max_relative = 1e-12);
    }

    #[test]
    fn recoil_matches_reference_value() {
        let sp = li7_species();
        let r = recoil_velocity(&sp).magnitude;
        // direct arithmetic oracle
        let oracle = 4.2e-19 / (2.99792458e8 * 1.165e-26);
        assert_relative_eq!(r, oracle, max_relative = 1e-12);
        assert_relative_eq!(r, 0.1202, max_relative = 1e-3);
        assert!((r - 0.12).abs() / 0.12 < 0.05);
        let mut heavy = sp.clone();
        heavy.mass *= 2.0;
        assert_relative_eq!(recoil_velocity(&heavy).magnitude, r / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn linewidth_and_ceiling() {
        let sp = li7_species();
        let f = linewidth_fraction(&sp);
        assert_relative_eq!(f, 1.57e-10, max_relative = 0.01);
        assert!((f - 1.4e-10).abs() / 1.4e-10 < 0.15);
        let r = max_useful_resolution(&sp);
        assert_relative_eq!(r, 1.0 / f, max_relative = 1e-12);
        assert_relative_eq!(r, 6.37e9, max_relative = 0.01);
        assert!((r - 7e9).abs() / 7e9 < 0.10);
        // lifetime scaling
        let mut long = sp.clone();
        long.lifetime *= 3.0;
        assert_relative_eq!(max_useful_resolution(&long), 3.0 * r, max_relative = 1e-12);
        assert_relative_eq!(linewidth_fraction(&long), f / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn diffraction_spread() {
        let dv = diffraction_velocity_spread(m(0.5e-8), Quantity::kilograms(1.165e-26).unwrap())
            .unwrap();
        assert_relative_eq!(dv.magnitude, 0.905, max_relative = 1e-3);
        // the 30-fold velocity-class argument implies about 1.5 m/s; factor-2 agreement
        let implied = 30.0 * 0.05;
        assert!(dv.magnitude / implied > 0.5 && dv.magnitude / implied < 2.0);
        let half =
            diffraction_velocity_spread(m(0.25e-8), Quantity::kilograms(1.165e-26).unwrap())
                .unwrap();
        assert_relative_eq!(half.magnitude, 2.0 * dv.magnitude, max_relative = 1e-12);
        // m·Δv·Δx_s = ħ/2 exactly
        assert_relative_eq!(1.165e-26 * dv.magnitude * 0.5e-8, consts::HBAR / 2.0,
                            max_relative = 1e-12);
    }

    #[test]
    fn spectrometer_resolution_values() {
        let dv = spectrometer_velocity_resolution(7e9).unwrap();
        assert_relative_eq!(dv.magnitude, 4.28e-2, max_relative = 1e-2);
        assert!((dv.magnitude - 0.05).abs() / 0.05 < 0.15);
        let unit = spectrometer_velocity_resolution(2.99792458e8).unwrap();
        assert_relative_eq!(unit.magnitude, 1.0, max_relative = 1e-12);
        assert!(spectrometer_velocity_resolution(0.5).is_err());
    }

    #[test]
    fn cosine_error_footnote() {
        let e = acceptance_cosine_error(mps(1.0), Quantity::dimensionless(2.7e-2).unwrap())
            .unwrap();
        assert_relative_eq!(e.magnitude, 3.6448e-4, max_relative = 1e-3);
        // reference value 3.1e-4; within about 20 percent
        assert!((e.magnitude - 3.1e-4).abs() / 3.1e-4 < 0.20);
        assert!(e.magnitude < 0.01 * 5e-2);
        let z = acceptance_cosine_error(mps(1.0), Quantity::dimensionless(0.0).unwrap()).unwrap();
        assert_eq!(z.magnitude, 0.0);
        // Taylor oracle v·θ²/2
        let taylor = 1.0 * 2.7e-2_f64.powi(2) / 2.0;
        assert_relative_eq!(e.magnitude, taylor, max_relative = 1e-4);
    }

    #[test]
    fn position_quadrature() {
        let t = total_position_sigma(m(0.5e-8), m(0.5e-8), m(7.0710678118654755e-9)).unwrap();
        assert_relative_eq!(t.magnitude, 1.0e-8, max_relative = 1e-12);
        let a = total_position_sigma(m(3.0), m(0.0), m(0.0)).unwrap();
        assert_eq!(a.magnitude, 3.0);
        let q = total_position_sigma(m(3.0), m(4.0), m(0.0)).unwrap();
        assert_relative_eq!(q.magnitude, 5.0, max_relative = 1e-12);
    }

    #[test]
    fn full_budget_table1() {
        let b = full_budget(&table1_default()).unwrap();
        // direct product oracle: m · Δv · Δx
        let oracle = 1.165e-26 * b.velocity_resolution * 1e-8;
        assert_relative_eq!(b.dispersion_product, oracle, max_relative = 1e-12);
        assert_relative_eq!(b.dispersion_product, 5.83e-36, max_relative = 2e-3);
        let inv = 1.0 / b.dispersion_product_over_hbar;
        assert!(inv > 10.0 && inv < 25.0);
        assert_relative_eq!(inv, 18.1, max_relative = 0.01);
        assert_eq!(b.dominant_term, DominantTerm::VelocitySpread);
    }

    #[test]
    fn full_budget_bilinearity() {
        let mut c = table1_default();
        c.velocity_resolution *= 10.0;
        c.total_position_sigma *= 10.0;
        let base = full_budget(&table1_default()).unwrap();
        let scaled = full_budget(&c).unwrap();
        // Δv_a scales linearly through the dominant Eq.-(1) term; the two
        // fixed small terms keep it from being exact
        assert_relative_eq!(
            scaled.dispersion_product,
            100.0 * base.dispersion_product,
            max_relative = 1e-4
        );
    }

    #[test]
    fn full_budget_rejects_invalid() {
        let mut c = table1_default();
        c.slit_width = -1.0;
        assert!(matches!(full_budget(&c), Err(BudgetError::InvalidConfig(_))));
    }

    #[test]
    fn focus_spread_dimension_check() {
        // composing Δθ·E/(c·m) through Quantity arithmetic must land on m/s
        let consts = crate::quantities::PhysicalConstants::get();
        let e = Quantity::joules(4.2e-19).unwrap();
        let mass = Quantity::kilograms(1.165e-26).unwrap();
        let dtheta = Quantity::dimensionless(0.05).unwrap();
        let dv = dtheta * e / (consts.c * mass);
        assert_eq!(dv.dim, Dim::VELOCITY);
    }

    proptest! {
        #[test]
        fn quadrature_monotone(dt in 0.0..1e-3f64, dxs in 0.0..1e-6f64,
                               dv in 0.0..1.0f64, bump in 1e-12..1e-3f64) {
            let base = arrival_time_dispersion(s(dt), m(dxs), mps(1.0), m(0.01), mps(dv))
                .unwrap().magnitude;
            for grown in [
                arrival_time_dispersion(s(dt + bump), m(dxs), mps(1.0), m(0.01), mps(dv)),
                arrival_time_dispersion(s(dt), m(dxs + bump), mps(1.0), m(0.01), mps(dv)),
                arrival_time_dispersion(s(dt), m(dxs), mps(1.0), m(0.01), mps(dv + bump)),
            ] {
                prop_assert!(grown.unwrap().magnitude >= base);
            }
        }

        #[test]
        fn time_velocity_roundtrip(v in 0.01..100.0f64, x in 1e-4..1.0f64, dv in 1e-6..10.0f64) {
            let dt = arrival_time_dispersion(s(0.0), m(0.0), mps(v), m(x), mps(dv)).unwrap();
            let back = required_velocity_resolution(dt, mps(v), m(x)).unwrap();
            prop_assert!((back.magnitude - dv).abs() / dv < 1e-12);
        }

        #[test]
        fn product_invariant_under_joint_rescale(k in 0.1..10.0f64) {
            let mut c = table1_default();
            c.velocity_resolution *= k;
            c.total_position_sigma /= k;
            if !validate(&c).has_errors() {
                let base = full_budget(&table1_default()).unwrap();
                let scaled = full_budget(&c).unwrap();
                // the two fixed Eq.-(1) terms break exactness at the 1% level
                prop_assert!((scaled.dispersion_product_over_hbar
                    - base.dispersion_product_over_hbar).abs()
                    / base.dispersion_product_over_hbar < 1e-2);
            }
        }
    }
}
