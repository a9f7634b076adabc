//! Dimensional-analysis substrate: SI quantities, physical constants, and
//! atomic species data.
//!
//! Every physics value in the budget math is representable as a [`Quantity`]
//! carrying its SI base-dimension exponents, so unit mistakes surface as
//! errors instead of silently wrong numbers.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Div, Mul};
use thiserror::Error;

/// SI base-dimension exponents in the order (m, kg, s, A, K, mol, cd).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dim(pub [i8; 7]);

impl Dim {
    pub const NONE: Dim = Dim([0; 7]);
    pub const LENGTH: Dim = Dim([1, 0, 0, 0, 0, 0, 0]);
    pub const MASS: Dim = Dim([0, 1, 0, 0, 0, 0, 0]);
    pub const TIME: Dim = Dim([0, 0, 1, 0, 0, 0, 0]);
    pub const TEMPERATURE: Dim = Dim([0, 0, 0, 0, 1, 0, 0]);
    pub const VELOCITY: Dim = Dim([1, 0, -1, 0, 0, 0, 0]);
    pub const FREQUENCY: Dim = Dim([0, 0, -1, 0, 0, 0, 0]);
    pub const ENERGY: Dim = Dim([2, 1, -2, 0, 0, 0, 0]);
    /// J·s, the dimension of an action (and of a dispersion product).
    pub const ACTION: Dim = Dim([2, 1, -1, 0, 0, 0, 0]);
    /// J/K, the dimension of the Boltzmann constant.
    pub const ENERGY_PER_TEMPERATURE: Dim = Dim([2, 1, -2, 0, -1, 0, 0]);

    pub fn combine(self, other: Dim, sign: i8) -> Dim {
        let mut out = [0i8; 7];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.0[i] + sign * other.0[i];
        }
        Dim(out)
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const NAMES: [&str; 7] = ["m", "kg", "s", "A", "K", "mol", "cd"];
        let mut first = true;
        for (name, &exp) in NAMES.iter().zip(self.0.iter()) {
            if exp != 0 {
                if !first {
                    write!(f, "·")?;
                }
                first = false;
                if exp == 1 {
                    write!(f, "{name}")?;
                } else {
                    write!(f, "{name}^{exp}")?;
                }
            }
        }
        if first {
            write!(f, "1")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantityError {
    #[error("dimension mismatch: {left} vs {right} in {op}")]
    DimensionMismatch { op: &'static str, left: Dim, right: Dim },
    #[error("non-finite magnitude {0}")]
    NonFinite(f64),
    #[error("expected dimension {expected}, got {got}")]
    WrongDimension { expected: Dim, got: Dim },
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("stated transition energy {stated} J disagrees with 2πħc/λ = {derived} J")]
    EnergyWavelengthMismatch { stated: f64, derived: f64 },
}

/// A scalar physical quantity: magnitude in SI base units plus dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub magnitude: f64,
    pub dim: Dim,
}

impl Quantity {
    pub fn new(magnitude: f64, dim: Dim) -> Result<Quantity, QuantityError> {
        if !magnitude.is_finite() {
            return Err(QuantityError::NonFinite(magnitude));
        }
        Ok(Quantity { magnitude, dim })
    }

    pub fn dimensionless(magnitude: f64) -> Result<Quantity, QuantityError> {
        Quantity::new(magnitude, Dim::NONE)
    }

    pub fn meters(v: f64) -> Result<Quantity, QuantityError> {
        Quantity::new(v, Dim::LENGTH)
    }

    pub fn seconds(v: f64) -> Result<Quantity, QuantityError> {
        Quantity::new(v, Dim::TIME)
    }

    pub fn kilograms(v: f64) -> Result<Quantity, QuantityError> {
        Quantity::new(v, Dim::MASS)
    }

    pub fn kelvin(v: f64) -> Result<Quantity, QuantityError> {
        Quantity::new(v, Dim::TEMPERATURE)
    }

    pub fn meters_per_second(v: f64) -> Result<Quantity, QuantityError> {
        Quantity::new(v, Dim::VELOCITY)
    }

    pub fn joules(v: f64) -> Result<Quantity, QuantityError> {
        Quantity::new(v, Dim::ENERGY)
    }

    pub fn try_add(self, other: Quantity) -> Result<Quantity, QuantityError> {
        if self.dim != other.dim {
            return Err(QuantityError::DimensionMismatch {
                op: "add",
                left: self.dim,
                right: other.dim,
            });
        }
        Quantity::new(self.magnitude + other.magnitude, self.dim)
    }

    pub fn try_sub(self, other: Quantity) -> Result<Quantity, QuantityError> {
        if self.dim != other.dim {
            return Err(QuantityError::DimensionMismatch {
                op: "sub",
                left: self.dim,
                right: other.dim,
            });
        }
        Quantity::new(self.magnitude - other.magnitude, self.dim)
    }

    pub fn sqrt(self) -> Result<Quantity, QuantityError> {
        let mut dim = [0i8; 7];
        for (i, d) in dim.iter_mut().enumerate() {
            if self.dim.0[i] % 2 != 0 {
                return Err(QuantityError::WrongDimension {
                    expected: Dim::NONE,
                    got: self.dim,
                });
            }
            *d = self.dim.0[i] / 2;
        }
        Quantity::new(self.magnitude.sqrt(), Dim(dim))
    }

    /// Magnitude after asserting the quantity carries the expected dimension.
    pub fn expect_dim(self, expected: Dim) -> Result<f64, QuantityError> {
        if self.dim != expected {
            return Err(QuantityError::WrongDimension { expected, got: self.dim });
        }
        Ok(self.magnitude)
    }
}

impl Mul for Quantity {
    type Output = Quantity;
    fn mul(self, rhs: Quantity) -> Quantity {
        Quantity {
            magnitude: self.magnitude * rhs.magnitude,
            dim: self.dim.combine(rhs.dim, 1),
        }
    }
}

impl Div for Quantity {
    type Output = Quantity;
    fn div(self, rhs: Quantity) -> Quantity {
        Quantity {
            magnitude: self.magnitude / rhs.magnitude,
            dim: self.dim.combine(rhs.dim, -1),
        }
    }
}

impl Mul<f64> for Quantity {
    type Output = Quantity;
    fn mul(self, rhs: f64) -> Quantity {
        Quantity { magnitude: self.magnitude * rhs, dim: self.dim }
    }
}

/// CODATA values, SI units.
pub mod consts {
    /// Reduced Planck constant, J·s.
    pub const HBAR: f64 = 1.054571817e-34;
    /// Speed of light, m/s.
    pub const C: f64 = 2.99792458e8;
    /// Boltzmann constant, J/K.
    pub const K_B: f64 = 1.380649e-23;
}

/// The fixed constants as dimension-carrying quantities.
#[derive(Debug, Clone, Copy)]
pub struct PhysicalConstants {
    pub hbar: Quantity,
    pub c: Quantity,
    pub k_b: Quantity,
}

impl PhysicalConstants {
    pub fn get() -> PhysicalConstants {
        PhysicalConstants {
            hbar: Quantity { magnitude: consts::HBAR, dim: Dim::ACTION },
            c: Quantity { magnitude: consts::C, dim: Dim::VELOCITY },
            k_b: Quantity { magnitude: consts::K_B, dim: Dim::ENERGY_PER_TEMPERATURE },
        }
    }
}

/// Relative tolerance for the E = 2πħc/λ consistency check.
pub const ENERGY_WAVELENGTH_RTOL: f64 = 1e-9;

/// An atom and the optical transition used to probe it. All fields SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpecies {
    pub label: String,
    pub mass: f64,
    pub transition_wavelength: f64,
    pub transition_energy: f64,
    pub lifetime: f64,
}

impl AtomSpecies {
    /// Build a species with the transition energy derived from the
    /// wavelength, so E = 2πħc/λ holds exactly.
    pub fn from_wavelength(
        label: impl Into<String>,
        mass: f64,
        wavelength: f64,
        lifetime: f64,
    ) -> Result<AtomSpecies, QuantityError> {
        let energy = 2.0 * std::f64::consts::PI * consts::HBAR * consts::C / wavelength;
        AtomSpecies::checked(label.into(), mass, wavelength, energy, lifetime)
    }

    /// Build a species with an explicitly stated photon energy. The
    /// wavelength is retained as a label; no E-λ consistency is enforced.
    /// Used for literature values quoted independently of the wavelength.
    pub fn with_stated_energy(
        label: impl Into<String>,
        mass: f64,
        wavelength: f64,
        energy: f64,
        lifetime: f64,
    ) -> Result<AtomSpecies, QuantityError> {
        check_positive("mass", mass)?;
        check_positive("wavelength", wavelength)?;
        check_positive("energy", energy)?;
        check_positive("lifetime", lifetime)?;
        Ok(AtomSpecies {
            label: label.into(),
            mass,
            transition_wavelength: wavelength,
            transition_energy: energy,
            lifetime,
        })
    }

    fn checked(
        label: String,
        mass: f64,
        wavelength: f64,
        energy: f64,
        lifetime: f64,
    ) -> Result<AtomSpecies, QuantityError> {
        let sp = AtomSpecies::with_stated_energy(label, mass, wavelength, energy, lifetime)?;
        let derived = 2.0 * std::f64::consts::PI * consts::HBAR * consts::C / wavelength;
        let rel = ((sp.transition_energy - derived) / derived).abs();
        if rel > ENERGY_WAVELENGTH_RTOL {
            return Err(QuantityError::EnergyWavelengthMismatch {
                stated: sp.transition_energy,
                derived,
            });
        }
        Ok(sp)
    }

    /// True whenever E = 2πħc/λ holds to [`ENERGY_WAVELENGTH_RTOL`].
    pub fn energy_wavelength_consistent(&self) -> bool {
        let derived =
            2.0 * std::f64::consts::PI * consts::HBAR * consts::C / self.transition_wavelength;
        ((self.transition_energy - derived) / derived).abs() <= ENERGY_WAVELENGTH_RTOL
    }
}

/// ⁷Li mass in kg: 7.016 u × 1.66054e-27 kg/u.
pub const LI7_MASS: f64 = 1.165e-26;
/// 3p → ground transition wavelength, m.
pub const LI7_WAVELENGTH: f64 = 323e-9;
/// Photon energy of the transition, J, as quoted in the literature.
///
/// Note this is the quoted value, not 2πħc/λ for 323 nm (which is
/// 6.15e-19 J); the recoil velocity and linewidth arithmetic downstream
/// are anchored to the quoted 4.2e-19 J.
pub const LI7_TRANSITION_ENERGY: f64 = 4.2e-19;
/// Excited-state lifetime, s.
pub const LI7_LIFETIME: f64 = 0.8e-6;

/// The ⁷Li 3p transition used throughout the default apparatus.
pub fn li7_species() -> AtomSpecies {
    AtomSpecies::with_stated_energy(
        "7Li 3p",
        LI7_MASS,
        LI7_WAVELENGTH,
        LI7_TRANSITION_ENERGY,
        LI7_LIFETIME,
    )
    .expect("li7 constants are valid")
}

fn check_positive(what: &'static str, value: f64) -> Result<(), QuantityError> {
    if !value.is_finite() || value <= 0.0 {
        return Err(QuantityError::NonPositive { what, value });
    }
    Ok(())
}

/// One-dimensional RMS thermal speed sqrt(k_B T / m), returned in m/s.
pub fn thermal_velocity(
    temperature: Quantity,
    species: &AtomSpecies,
) -> Result<Quantity, QuantityError> {
    let t = temperature.expect_dim(Dim::TEMPERATURE)?;
    check_positive("temperature", t)?;
    let consts = PhysicalConstants::get();
    let mass = Quantity::kilograms(species.mass)?;
    let v2 = consts.k_b * temperature / mass;
    v2.sqrt()
}
