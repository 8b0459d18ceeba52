//! Finite-difference solver for the dividend problem in the
//! (surplus, drift-estimate) plane.
//!
//! Pipeline: [`mesh::build_mesh`] lays a graded tensor grid,
//! [`assemble::epsilon_profile`] prepares the ramped vertical-diffusion
//! floor, [`policy::policy_iteration`] alternates banded direct solves with
//! greedy policy updates, and [`threshold::extract_threshold`] reads the
//! payout boundary off the converged policy. [`solve_dividend_problem`]
//! wires all of that together with sensible defaults, seeding the iteration
//! from the two single-regime thresholds.

pub mod assemble;
pub mod banded;
pub mod grid;
pub mod mesh;
pub mod policy;
pub mod threshold;

pub use assemble::{
    assemble_system, epsilon_profile, AssembledSystem, AssemblyReport, EpsilonProfile,
    PositivityViolation,
};
pub use grid::{PolicyGrid, ValueGrid};
pub use mesh::{build_mesh, Mesh};
pub use policy::{
    improve_policy, policy_iteration, solve_linear_pde, IterationRecord, PolicyIterationResult,
    DEFAULT_VALUE_TOL, RESIDUAL_LIMIT,
};
pub use threshold::{
    epsilon_refinement_study, extract_threshold, initial_threshold, policy_from_threshold,
    RefinementStep, ThresholdCurve,
};

use crate::model::{ModelError, ModelParams};
use thiserror::Error;

/// Default surplus-domain truncation.
pub const DEFAULT_H: f64 = 10.0;
/// Default surplus interval count.
pub const DEFAULT_NX: usize = 200;
/// Default drift-estimate interval count.
pub const DEFAULT_NU: usize = 40;
/// Default node-density ratio inside the refinement band.
pub const DEFAULT_REFINE: f64 = 4.0;
/// Default vertical-diffusion floor level.
pub const DEFAULT_EPS: f64 = 1e-3;
/// Default cap on policy-iteration sweeps.
pub const DEFAULT_MAX_ITER: usize = 50;

/// Default ramp width for the floor profile: a tenth of the drift gap.
pub fn default_zeta(params: &ModelParams) -> f64 {
    0.1 * (params.mu_top() - params.mu_bottom())
}

/// Everything that can go wrong between meshing and convergence.
#[derive(Debug, Clone, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("invalid solver input: {0}")]
    BadInput(String),
    #[error(
        "monotonicity lost: {count} negative stencil weights (first at node \
         ({},{}) towards ({},{}), weight {weight:e})",
        first.0 .0, first.0 .1, first.1 .0, first.1 .1
    )]
    PositivityLoss {
        count: usize,
        /// (node, neighbour) of the first recorded violation.
        first: ((usize, usize), (usize, usize)),
        weight: f64,
    },
    #[error("singular pivot {pivot:e} in row {row} of the banded factorization")]
    SingularRow { row: usize, pivot: f64 },
    #[error("linear solve residual {residual:e} exceeds the limit {limit:e}")]
    ResidualTooLarge { residual: f64, limit: f64 },
    #[error(
        "policy iteration did not converge within {max_iter} sweeps; \
         {oscillating_count} nodes still changing (sample: {sample:?})"
    )]
    NonConvergence {
        max_iter: usize,
        oscillating_count: usize,
        sample: Vec<(usize, usize)>,
    },
}

impl SolveError {
    pub(crate) fn positivity(report: &AssemblyReport) -> Self {
        let first = &report.violations[0];
        SolveError::PositivityLoss {
            count: report.violations.len(),
            first: (first.node, first.neighbor),
            weight: first.coefficient,
        }
    }
}

/// Mesh and solver knobs for [`solve_dividend_problem`]. `None` fields fall
/// back to the documented defaults; the band defaults to one surplus unit
/// around the two single-regime thresholds.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub h: f64,
    pub n_x: usize,
    pub n_u: usize,
    pub refine_factor: f64,
    pub band: Option<(f64, f64)>,
    pub eps: f64,
    pub zeta: Option<f64>,
    pub max_iter: usize,
    /// Sup-norm tolerance on value changes between sweeps; `None` means
    /// [`DEFAULT_VALUE_TOL`].
    pub tol: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            h: DEFAULT_H,
            n_x: DEFAULT_NX,
            n_u: DEFAULT_NU,
            refine_factor: DEFAULT_REFINE,
            band: None,
            eps: DEFAULT_EPS,
            zeta: None,
            max_iter: DEFAULT_MAX_ITER,
            tol: None,
        }
    }
}

/// A converged solve with its full context.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub mesh: Mesh,
    pub value: ValueGrid,
    pub policy: PolicyGrid,
    pub threshold: ThresholdCurve,
    pub log: Vec<IterationRecord>,
    pub report: AssemblyReport,
    /// Single-regime thresholds (high-drift, low-drift) used as the seed.
    pub seed_thresholds: (f64, f64),
}

/// Runs policy iteration on a prepared mesh and floor profile, seeding from
/// the single-regime thresholds of the two drift regimes.
pub(crate) fn run_on_mesh(
    params: &ModelParams,
    mesh: &Mesh,
    profile: &EpsilonProfile,
    max_iter: usize,
    tol: f64,
) -> Result<SolveOutput, SolveError> {
    let b1 = crate::benchmark::single_regime_threshold(
        params.mu_top(),
        params.sigma,
        params.delta,
        params.k,
    )?
    .threshold;
    let b2 = crate::benchmark::single_regime_threshold(
        params.mu_bottom(),
        params.sigma,
        params.delta,
        params.k,
    )?
    .threshold;
    let seed = initial_threshold(params, mesh, b1, b2)?;
    let initial = policy_from_threshold(params, mesh, &seed)?;
    let result = policy_iteration(params, mesh, profile, &initial, max_iter, tol)?;
    Ok(SolveOutput {
        mesh: mesh.clone(),
        value: result.value,
        policy: result.policy,
        threshold: result.threshold,
        log: result.log,
        report: result.report,
        seed_thresholds: (b1, b2),
    })
}

/// End-to-end solve: meshes the domain, builds the floor profile, seeds from
/// the single-regime solutions, and iterates to convergence.
pub fn solve_dividend_problem(
    params: &ModelParams,
    settings: &SolverSettings,
) -> Result<SolveOutput, SolveError> {
    params.validate()?;
    params.require_two_state("M")?;
    let b1 = crate::benchmark::single_regime_threshold(
        params.mu_top(),
        params.sigma,
        params.delta,
        params.k,
    )?
    .threshold;
    let b2 = crate::benchmark::single_regime_threshold(
        params.mu_bottom(),
        params.sigma,
        params.delta,
        params.k,
    )?
    .threshold;
    let band = settings.band.unwrap_or_else(|| {
        let lo = b1.min(b2);
        let hi = b1.max(b2);
        if hi <= 0.0 {
            (0.0, 1.0_f64.min(settings.h))
        } else {
            ((lo - 1.0).max(0.0), (hi + 1.0).min(settings.h))
        }
    });
    let mesh = build_mesh(
        params,
        settings.h,
        settings.n_x,
        settings.n_u,
        band,
        settings.refine_factor,
    )?;
    if settings.eps < 0.0 || !settings.eps.is_finite() {
        return Err(SolveError::BadInput(format!(
            "floor level eps = {} must be finite and nonnegative",
            settings.eps
        )));
    }
    let zeta = settings.zeta.unwrap_or_else(|| default_zeta(params));
    let profile = if settings.eps > 0.0 {
        epsilon_profile(params, settings.eps, zeta, &mesh)?
    } else {
        EpsilonProfile::zero(&mesh)
    };
    run_on_mesh(
        params,
        &mesh,
        &profile,
        settings.max_iter,
        settings.tol.unwrap_or(DEFAULT_VALUE_TOL),
    )
}
