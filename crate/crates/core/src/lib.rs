//! Simulator and uncertainty-budget engine for a pulsed cold-atom
//! time-of-flight experiment: a slow atom is excited, recoils on emitting a
//! photon whose Doppler shift is measured by a spectrometer, and the atom's
//! arrival time at a detector tests how well position and velocity can be
//! known together.
//!
//! The crate offers four views of the same apparatus:
//!
//! - [`analytic_budget`]: closed-form dispersion arithmetic (time, velocity
//!   and position resolutions, the m·Δv·Δx product);
//! - [`monte_carlo`]: a per-event simulation of the full measurement chain
//!   with all noise sources drawn explicitly;
//! - [`rate_budget`]: the counting-rate ledger from trap phase-space density
//!   down to counts per second;
//! - [`sweep_optimize`]: grid sweeps and constrained minimization over the
//!   apparatus parameters.
//!
//! [`quantities`] supplies dimension-checked arithmetic underneath, and
//! [`apparatus`] holds the named, validated parameter set.

pub mod analytic_budget;
pub mod apparatus;
pub mod cli_io;
pub mod monte_carlo;
pub mod quantities;
pub mod rate_budget;
pub mod sweep_optimize;

pub use analytic_budget::{full_budget, BudgetReport};
pub use apparatus::{table1_default, validate, ApparatusConfig};
pub use monte_carlo::{run_simulation, RunPlan, SimulationSummary};
pub use quantities::{AtomSpecies, Quantity};
pub use rate_budget::{paper_chain, RateChain, VelocityVolumeMode};
pub use sweep_optimize::{coordinate_descent, run_sweep, SweepResult, SweepSpec};
