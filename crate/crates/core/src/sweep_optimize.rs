//! Parameter-space exploration: exhaustive grid sweeps over named apparatus
//! parameters and a constrained coordinate-descent search minimizing the
//! dispersion product subject to a minimum counting rate.

use crate::analytic_budget::{full_budget, BudgetError, BudgetReport};
use crate::apparatus::{validate, ApparatusConfig, UnknownField};
use crate::monte_carlo::{run_simulation, McError, RunPlan};
use crate::rate_budget::{paper_chain, RateError, VelocityVolumeMode};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    UnknownField(#[from] UnknownField),
    #[error("sweep needs at least one parameter")]
    NoParameters,
    #[error("parameter `{0}` has an empty grid")]
    EmptyGrid(String),
    #[error("parameter `{name}` range invalid: min {min} must be < max {max} (positive for log)")]
    BadRange { name: String, min: f64, max: f64 },
    #[error("objective is not finite at the starting point")]
    NonFiniteObjective,
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    MonteCarlo(#[from] McError),
}

/// Grid of values for one named parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    Values { values: Vec<f64> },
    Linear { min: f64, max: f64, n: usize },
    Log { min: f64, max: f64, n: usize },
}

impl GridSpec {
    pub fn expand(&self, name: &str) -> Result<Vec<f64>, SweepError> {
        let points = match self {
            GridSpec::Values { values } => values.clone(),
            GridSpec::Linear { min, max, n } => {
                if !(min < max) {
                    return Err(SweepError::BadRange { name: name.into(), min: *min, max: *max });
                }
                range_points(*n, |t| min + (max - min) * t)
            }
            GridSpec::Log { min, max, n } => {
                if !(*min > 0.0 && min < max) {
                    return Err(SweepError::BadRange { name: name.into(), min: *min, max: *max });
                }
                let (lmin, lmax) = (min.ln(), max.ln());
                range_points(*n, |t| (lmin + (lmax - lmin) * t).exp())
            }
        };
        if points.is_empty() {
            return Err(SweepError::EmptyGrid(name.into()));
        }
        Ok(points)
    }
}

fn range_points(n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![f(0.5)],
        _ => (0..n).map(|i| f(i as f64 / (n - 1) as f64)).collect(),
    }
}

/// What the sweep or optimizer minimizes (rate is maximized).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    DispersionProduct,
    ArrivalTimeDispersion,
    Rate,
}

/// How each grid point is scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalMode {
    Analytic,
    MonteCarlo { events: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameters: Vec<(String, GridSpec)>,
    pub objective: Objective,
    /// Minimum acceptable counting rate, counts per minute.
    pub min_rate_per_minute: Option<f64>,
    pub eval: EvalMode,
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Parameter values, ordered as in the sweep's parameter list.
    pub point: Vec<f64>,
    pub budget: Option<BudgetReport>,
    /// Counts per minute from the loss chain.
    pub rate_per_minute: Option<f64>,
    /// Monte Carlo arrival-time dispersion when eval mode requests it, s.
    pub mc_arrival_time_dispersion: Option<f64>,
    pub feasible: bool,
    /// Validation messages for infeasible points.
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter_names: Vec<String>,
    pub rows: Vec<SweepRow>,
    /// Index into `rows` of the best feasible point, if any.
    pub best_feasible: Option<usize>,
    /// (dispersion product J·s, rate counts/min) of non-dominated feasible
    /// rows, sorted by increasing rate.
    pub pareto_front: Vec<(f64, f64)>,
}

fn objective_value(objective: Objective, row: &SweepRow) -> f64 {
    match objective {
        Objective::DispersionProduct => row
            .budget
            .as_ref()
            .map(|b| b.dispersion_product)
            .unwrap_or(f64::INFINITY),
        Objective::ArrivalTimeDispersion => {
            // Monte Carlo dispersion when available, analytic otherwise
            row.mc_arrival_time_dispersion.unwrap_or_else(|| {
                row.budget
                    .as_ref()
                    .map(|b| b.arrival_time_dispersion)
                    .unwrap_or(f64::INFINITY)
            })
        }
        // maximize rate = minimize its negation
        Objective::Rate => -row.rate_per_minute.unwrap_or(f64::NEG_INFINITY),
    }
}

fn evaluate_point(
    base: &ApparatusConfig,
    names: &[String],
    point: &[f64],
    spec: &SweepSpec,
) -> SweepRow {
    let mut config = base.clone();
    for (name, value) in names.iter().zip(point) {
        if let Err(e) = config.set_field(name, *value) {
            return SweepRow {
                point: point.to_vec(),
                budget: None,
                rate_per_minute: None,
                mc_arrival_time_dispersion: None,
                feasible: false,
                errors: vec![e.to_string()],
            };
        }
    }
    let report = validate(&config);
    if report.has_errors() {
        return SweepRow {
            point: point.to_vec(),
            budget: None,
            rate_per_minute: None,
            mc_arrival_time_dispersion: None,
            feasible: false,
            errors: report.errors().map(|i| i.message.clone()).collect(),
        };
    }
    let budget = full_budget(&config).ok();
    let rate_per_minute = paper_chain(&config, VelocityVolumeMode::Paper)
        .ok()
        .map(|c| c.final_rate_per_minute());
    let mc_arrival_time_dispersion = match spec.eval {
        EvalMode::Analytic => None,
        EvalMode::MonteCarlo { events, seed } => run_simulation(
            &config,
            &RunPlan::accepted_target(events, seed),
        )
        .ok()
        .and_then(|s| s.empirical_arrival_time_dispersion),
    };
    let mut errors = Vec::new();
    let mut feasible = budget.is_some() && rate_per_minute.is_some();
    if let (Some(min_rate), Some(rate)) = (spec.min_rate_per_minute, rate_per_minute) {
        if rate < min_rate {
            feasible = false;
            errors.push(format!(
                "rate {rate:.3e}/min below the {min_rate:.3e}/min floor"
            ));
        }
    }
    SweepRow {
        point: point.to_vec(),
        budget,
        rate_per_minute,
        mc_arrival_time_dispersion,
        feasible,
        errors,
    }
}

/// Evaluate the full Cartesian grid in lexicographic order (first parameter
/// varies slowest). Rows are computed in parallel but assembled in canonical
/// order, so the result is independent of worker count.
pub fn run_sweep(spec: &SweepSpec, base: &ApparatusConfig) -> Result<SweepResult, SweepError> {
    if spec.parameters.is_empty() {
        return Err(SweepError::NoParameters);
    }
    let mut names = Vec::new();
    let mut grids = Vec::new();
    for (name, grid) in &spec.parameters {
        // reject unknown names up front rather than once per row
        base.get_field(name)?;
        names.push(name.clone());
        grids.push(grid.expand(name)?);
    }

    let total: usize = grids.iter().map(Vec::len).product();
    let points: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            let mut point = vec![0.0; grids.len()];
            for (slot, grid) in point.iter_mut().zip(&grids).rev() {
                *slot = grid[idx % grid.len()];
                idx /= grid.len();
            }
            point
        })
        .collect();

    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|p| evaluate_point(base, &names, p, spec))
        .collect();

    let best_feasible = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.feasible)
        .min_by(|(_, a), (_, b)| {
            objective_value(spec.objective, a)
                .total_cmp(&objective_value(spec.objective, b))
                // ties broken by the lexicographically smaller point
                .then_with(|| a.point.partial_cmp(&b.point).unwrap_or(std::cmp::Ordering::Equal))
        })
        .map(|(i, _)| i);

    let mut candidates: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.feasible)
        .filter_map(|r| {
            Some((r.budget.as_ref()?.dispersion_product, r.rate_per_minute?))
        })
        .collect();
    // scan from the highest rate down, keeping strict product improvements;
    // ties in rate keep only their lowest product
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    let mut pareto_front = Vec::new();
    let mut best_product = f64::INFINITY;
    for &(product, rate) in &candidates {
        if product < best_product {
            best_product = product;
            pareto_front.push((product, rate));
        }
    }
    pareto_front.reverse();

    Ok(SweepResult { parameter_names: names, rows, best_feasible, pareto_front })
}

/// Penalized scalar objective used by the optimizer: the chosen metric for
/// feasible configurations, a large constant for invalid or
/// constraint-violating ones.
fn penalized_objective(
    config: &ApparatusConfig,
    objective: Objective,
    min_rate_per_minute: Option<f64>,
) -> f64 {
    const PENALTY: f64 = 1e300;
    if validate(config).has_errors() {
        return PENALTY;
    }
    let Ok(budget) = full_budget(config) else { return PENALTY };
    let Ok(chain) = paper_chain(config, VelocityVolumeMode::Paper) else { return PENALTY };
    let rate = chain.final_rate_per_minute();
    if let Some(min_rate) = min_rate_per_minute {
        if rate < min_rate {
            return PENALTY;
        }
    }
    match objective {
        Objective::DispersionProduct => budget.dispersion_product,
        Objective::ArrivalTimeDispersion => budget.arrival_time_dispersion,
        Objective::Rate => -rate,
    }
}

const GOLDEN_RATIO_CONJUGATE: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization of `f` on [lo, hi] to absolute tolerance.
fn golden_section(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut a = hi - GOLDEN_RATIO_CONJUGATE * (hi - lo);
    let mut b = lo + GOLDEN_RATIO_CONJUGATE * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - GOLDEN_RATIO_CONJUGATE * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + GOLDEN_RATIO_CONJUGATE * (hi - lo);
            fb = f(b);
        }
    }
    let mid = 0.5 * (lo + hi);
    // prefer an endpoint if it beats the interior midpoint (monotone objectives)
    let mut best = (f(mid), mid);
    for cand in [lo, hi] {
        let fc = f(cand);
        if fc < best.0 {
            best = (fc, cand);
        }
    }
    best.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentOptions {
    pub objective: Objective,
    pub min_rate_per_minute: Option<f64>,
    pub max_iters: usize,
    /// Per-parameter absolute line-search tolerance as a fraction of the
    /// bound width.
    pub tolerance: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            objective: Objective::DispersionProduct,
            min_rate_per_minute: None,
            max_iters: 20,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentResult {
    pub config_point: Vec<(String, f64)>,
    pub budget: BudgetReport,
    /// Best objective value after each full pass over the parameters.
    pub objective_trace: Vec<f64>,
}

/// Cyclic per-parameter golden-section descent on the analytic objective.
///
/// Deterministic: no randomness, fixed parameter cycle order. Returns the
/// best configuration found (a local refinement, not a global optimum).
pub fn coordinate_descent(
    base: &ApparatusConfig,
    parameters: &[(String, (f64, f64))],
    options: &DescentOptions,
) -> Result<(ApparatusConfig, DescentResult), SweepError> {
    for (name, (lo, hi)) in parameters {
        let v = base.get_field(name)?;
        if !(lo < hi) || v < *lo || v > *hi {
            return Err(SweepError::BadRange { name: name.clone(), min: *lo, max: *hi });
        }
    }
    let score = |c: &ApparatusConfig| {
        penalized_objective(c, options.objective, options.min_rate_per_minute)
    };
    let mut current = base.clone();
    let mut best = score(&current);
    if !best.is_finite() {
        return Err(SweepError::NonFiniteObjective);
    }
    let mut trace = Vec::new();
    for _ in 0..options.max_iters {
        let before = best;
        for (name, (lo, hi)) in parameters {
            let tol = options.tolerance * (hi - lo);
            let candidate_value = golden_section(*lo, *hi, tol, |v| {
                let mut c = current.clone();
                c.set_field(name, v).expect("name validated above");
                score(&c)
            });
            let mut candidate = current.clone();
            candidate.set_field(name, candidate_value).expect("name validated above");
            let s = score(&candidate);
            if s < best {
                best = s;
                current = candidate;
            }
        }
        trace.push(best);
        if before - best <= before.abs() * 1e-12 {
            break;
        }
    }
    let budget = full_budget(&current)?;
    let config_point = parameters
        .iter()
        .map(|(name, _)| (name.clone(), current.get_field(name).unwrap()))
        .collect();
    Ok((current, DescentResult { config_point, budget, objective_trace: trace }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apparatus::table1_default;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn analytic_spec(parameters: Vec<(String, GridSpec)>) -> SweepSpec {
        SweepSpec {
            parameters,
            objective: Objective::DispersionProduct,
            min_rate_per_minute: None,
            eval: EvalMode::Analytic,
        }
    }

    #[test]
    fn base_point_matches_full_budget() {
        let spec = analytic_spec(vec![(
            "slit_position_sigma".into(),
            GridSpec::Values { values: vec![0.25e-8, 0.5e-8, 1e-8] },
        )]);
        let result = run_sweep(&spec, &table1_default()).unwrap();
        assert_eq!(result.rows.len(), 3);
        let reference = full_budget(&table1_default()).unwrap();
        let mid = result.rows[1].budget.as_ref().unwrap();
        assert_eq!(mid.dispersion_product, reference.dispersion_product);
        assert_eq!(mid.arrival_time_dispersion, reference.arrival_time_dispersion);
    }

    #[test]
    fn narrowing_slit_raises_diffraction_kick() {
        // stay below the fixed total position sigma so every row validates
        let values = vec![1e-8, 0.5e-8, 0.25e-8, 0.125e-8];
        let spec = analytic_spec(vec![(
            "slit_position_sigma".into(),
            GridSpec::Values { values: values.clone() },
        )]);
        let result = run_sweep(&spec, &table1_default()).unwrap();
        let kicks: Vec<f64> = result
            .rows
            .iter()
            .map(|r| r.budget.as_ref().unwrap().diffraction_velocity_spread)
            .collect();
        // closed-form 1/Δx_s scaling oracle
        for (i, v) in values.iter().enumerate() {
            assert_relative_eq!(kicks[i] * v, kicks[0] * values[0], max_relative = 1e-12);
        }
        assert!(kicks.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rate_floor_excludes_low_rate_points() {
        // shrinking the solid-angle fraction scales rate linearly
        let mut spec = analytic_spec(vec![(
            "spectrometer_solid_angle_fraction".into(),
            GridSpec::Values { values: vec![3e-4, 3e-5, 3e-6] },
        )]);
        spec.min_rate_per_minute = Some(0.01);
        let result = run_sweep(&spec, &table1_default()).unwrap();
        let feas: Vec<bool> = result.rows.iter().map(|r| r.feasible).collect();
        // row-by-row recomputation oracle
        for row in &result.rows {
            let mut c = table1_default();
            c.set_field("spectrometer_solid_angle_fraction", row.point[0]).unwrap();
            let rate = paper_chain(&c, VelocityVolumeMode::Paper)
                .unwrap()
                .final_rate_per_minute();
            assert_eq!(row.feasible, rate >= 0.01);
            assert_relative_eq!(row.rate_per_minute.unwrap(), rate, max_relative = 1e-12);
        }
        assert_eq!(feas, vec![true, false, false]);
        assert_eq!(result.best_feasible, Some(0));
    }

    #[test]
    fn all_infeasible_sweep_is_a_result() {
        let spec = analytic_spec(vec![(
            "slit_to_detector_distance".into(),
            GridSpec::Values { values: vec![-1.0, -2.0] },
        )]);
        let result = run_sweep(&spec, &table1_default()).unwrap();
        assert!(result.best_feasible.is_none());
        assert!(result.pareto_front.is_empty());
        assert!(result.rows.iter().all(|r| !r.feasible && !r.errors.is_empty()));
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let spec = analytic_spec(vec![(
            "slit_widht".into(),
            GridSpec::Values { values: vec![1e-8] },
        )]);
        match run_sweep(&spec, &table1_default()) {
            Err(SweepError::UnknownField(e)) => {
                assert_eq!(e.suggestion.as_deref(), Some("slit_width"));
            }
            other => panic!("expected unknown-field error, got {other:?}"),
        }
    }

    #[test]
    fn grid_expansion_shapes() {
        let lin = GridSpec::Linear { min: 0.0, max: 1.0, n: 5 }.expand("p").unwrap();
        assert_eq!(lin, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let log = GridSpec::Log { min: 1.0, max: 100.0, n: 3 }.expand("p").unwrap();
        assert_relative_eq!(log[1], 10.0, max_relative = 1e-12);
        assert!(GridSpec::Linear { min: 1.0, max: 0.0, n: 3 }.expand("p").is_err());
        assert!(GridSpec::Values { values: vec![] }.expand("p").is_err());
    }

    #[test]
    fn two_parameter_grid_is_lexicographic() {
        let spec = analytic_spec(vec![
            ("slit_to_detector_distance".into(), GridSpec::Values { values: vec![0.01, 0.02] }),
            ("mean_atom_x_velocity".into(), GridSpec::Values { values: vec![1.0, 2.0, 3.0] }),
        ]);
        let result = run_sweep(&spec, &table1_default()).unwrap();
        let points: Vec<Vec<f64>> = result.rows.iter().map(|r| r.point.clone()).collect();
        assert_eq!(
            points,
            vec![
                vec![0.01, 1.0], vec![0.01, 2.0], vec![0.01, 3.0],
                vec![0.02, 1.0], vec![0.02, 2.0], vec![0.02, 3.0],
            ]
        );
    }

    #[test]
    fn sweep_reruns_are_identical() {
        let spec = analytic_spec(vec![(
            "total_position_sigma".into(),
            GridSpec::Log { min: 0.5e-8, max: 4e-8, n: 7 },
        )]);
        let a = run_sweep(&spec, &table1_default()).unwrap();
        let b = run_sweep(&spec, &table1_default()).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn descent_on_monotone_objective_hits_lower_bound() {
        // product is linear in the total position sigma, so the optimum of
        // a 1-D search is the lower bound
        let base = table1_default();
        let (config, result) = coordinate_descent(
            &base,
            &[("total_position_sigma".into(), (0.5e-8, 2e-8))],
            &DescentOptions::default(),
        )
        .unwrap();
        let v = config.get_field("total_position_sigma").unwrap();
        assert_relative_eq!(v, 0.5e-8, max_relative = 1e-3);
        let base_product = full_budget(&base).unwrap().dispersion_product;
        assert!(result.budget.dispersion_product < base_product);
    }

    #[test]
    fn zero_iterations_returns_base() {
        let base = table1_default();
        let options = DescentOptions { max_iters: 0, ..DescentOptions::default() };
        let (config, result) = coordinate_descent(
            &base,
            &[("total_position_sigma".into(), (0.5e-8, 2e-8))],
            &options,
        )
        .unwrap();
        assert_eq!(
            config.get_field("total_position_sigma").unwrap(),
            base.get_field("total_position_sigma").unwrap()
        );
        assert_eq!(
            result.budget.dispersion_product,
            full_budget(&base).unwrap().dispersion_product
        );
        assert!(result.objective_trace.is_empty());
    }

    #[test]
    fn descent_never_worse_than_base_and_monotone() {
        let base = table1_default();
        let (_, result) = coordinate_descent(
            &base,
            &[
                ("total_position_sigma".into(), (0.5e-8, 4e-8)),
                ("velocity_resolution".into(), (0.01, 0.2)),
                ("slit_to_detector_distance".into(), (0.005, 0.04)),
            ],
            &DescentOptions {
                min_rate_per_minute: Some(0.001),
                ..DescentOptions::default()
            },
        )
        .unwrap();
        let base_product = full_budget(&base).unwrap().dispersion_product;
        assert!(result.budget.dispersion_product <= base_product);
        assert!(result
            .objective_trace
            .windows(2)
            .all(|w| w[1] <= w[0]));
    }

    #[test]
    fn descent_rejects_out_of_bounds_base() {
        let base = table1_default();
        let err = coordinate_descent(
            &base,
            &[("total_position_sigma".into(), (2e-8, 4e-8))],
            &DescentOptions::default(),
        );
        assert!(matches!(err, Err(SweepError::BadRange { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn pareto_front_is_non_dominated(
            sigmas in proptest::collection::vec(0.3e-8..4e-8f64, 2..6),
            angles in proptest::collection::vec(1e-5..1e-3f64, 2..4),
        ) {
            let spec = analytic_spec(vec![
                ("total_position_sigma".into(), GridSpec::Values { values: sigmas }),
                ("spectrometer_solid_angle_fraction".into(), GridSpec::Values { values: angles }),
            ]);
            let result = run_sweep(&spec, &table1_default()).unwrap();
            let evaluated: Vec<(f64, f64)> = result
                .rows
                .iter()
                .filter(|r| r.feasible)
                .map(|r| (r.budget.as_ref().unwrap().dispersion_product, r.rate_per_minute.unwrap()))
                .collect();
            for &(p, r) in &result.pareto_front {
                prop_assert!(!evaluated.iter().any(|&(p2, r2)| p2 < p && r2 > r));
            }
            prop_assert!(result.pareto_front.windows(2).all(|w| w[0].1 <= w[1].1));
            prop_assert!(result.pareto_front.windows(2).all(|w| w[0].0 >= w[1].0));
        }
    }
}
