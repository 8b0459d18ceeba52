//! Forward simulation of the dividend-controlled surplus and Monte-Carlo
//! estimation of the discounted payout a threshold strategy collects.
//!
//! The simulation advances the pair (surplus, drift estimate) with one
//! shared Brownian increment per step — the innovation representation, in
//! which the filter is driven by the same noise the controller observes.
//! Each step pays at the full cap exactly when the surplus sits at or above
//! the threshold curve evaluated at the current drift estimate, and the
//! payout is discounted with the exact per-step integral
//! `u e^{-delta t} (1 - e^{-delta dt}) / delta` rather than a left-endpoint
//! rectangle. Ruin stops a path at a linearly interpolated crossing time
//! (with the crossing fraction of that step's payout); the horizon
//! truncates the integral with an analytically bounded bias
//! `e^{-delta T} K / delta`.
//!
//! Paths are deterministic functions of `(seed, path index)`: path `i` uses
//! an independent counter-mode RNG stream, so results are bitwise
//! reproducible regardless of how many worker threads run the batch.

use crate::filter::{nu_step_raw, stream_rng};
use crate::hjb::ThresholdCurve;
use crate::model::{nu_from_head, ModelError, ModelParams, SIMPLEX_FLOOR, SUM_TOL};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Horizon truncation bias target used when no horizon is given: the
/// default horizon makes the truncated tail worth at most this fraction of
/// the payout bound `K / delta`.
pub const DEFAULT_TRUNCATION_BIAS: f64 = 1e-4;

/// Probability levels reported for the ruin-time distribution.
pub const RUIN_QUANTILES: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

/// Hard cap on time steps per path, to catch absurd `dt`/`horizon` pairs.
const MAX_STEPS_PER_PATH: usize = 500_000_000;

/// What a single controlled path produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    /// Discounted dividends collected until ruin or the horizon.
    pub payout: f64,
    /// Interpolated ruin time, or `None` if the path survived the horizon.
    pub ruin_time: Option<f64>,
}

/// Monte-Carlo summary of a strategy's value.
#[derive(Debug, Clone)]
pub struct StrategyEvaluation {
    /// Sample mean of the discounted payout.
    pub estimate: f64,
    /// Sample standard deviation divided by `sqrt(n_paths)`.
    pub std_error: f64,
    /// Number of independent paths averaged.
    pub n_paths: usize,
    /// Fraction of paths ruined before the horizon.
    pub ruin_fraction: f64,
    /// Horizon actually simulated.
    pub horizon: f64,
    /// Analytic bound `e^{-delta horizon} K / delta` on the truncation bias.
    pub truncation_bias: f64,
}

/// Empirical description of the ruin time under a strategy.
#[derive(Debug, Clone)]
pub struct RuinStatistics {
    /// Fraction of paths ruined before the horizon.
    pub ruin_fraction: f64,
    /// Number of ruined paths.
    pub n_ruined: usize,
    /// Number of paths simulated.
    pub n_paths: usize,
    /// Horizon actually simulated.
    pub horizon: f64,
    /// `(level, ruin-time quantile)` pairs over the ruined paths, at the
    /// levels in [`RUIN_QUANTILES`]; empty when no path was ruined.
    pub quantiles: Vec<(f64, f64)>,
}

/// The horizon [`evaluate_strategy`] uses when none is requested: long
/// enough that the discounted tail is worth at most
/// [`DEFAULT_TRUNCATION_BIAS`] of the payout bound.
pub fn default_horizon(params: &ModelParams) -> f64 {
    (1.0 / DEFAULT_TRUNCATION_BIAS).ln() / params.delta
}

/// Threshold lookup with a fast path for uniformly spaced curve nodes.
///
/// Reproduces [`ThresholdCurve::b_at`] exactly: the estimate is clamped to
/// the node range, the cell is interpolated linearly, and a cell with an
/// infinite endpoint yields infinity.
struct Lookup<'a> {
    curve: &'a ThresholdCurve,
    /// `(first node, 1/spacing)` when the nodes are exactly uniform.
    uniform: Option<(f64, f64)>,
}

impl<'a> Lookup<'a> {
    fn new(curve: &'a ThresholdCurve) -> Self {
        let us = &curve.us;
        let n = us.len();
        let du = (us[n - 1] - us[0]) / (n - 1) as f64;
        let uniform = us
            .iter()
            .enumerate()
            .all(|(j, &u)| u == us[0] + j as f64 * du)
            .then_some((us[0], 1.0 / du));
        Lookup { curve, uniform }
    }

    #[inline]
    fn b_at(&self, nu: f64) -> f64 {
        let Some((u0, inv_du)) = self.uniform else {
            return self.curve.b_at(nu);
        };
        let us = &self.curve.us;
        let b = &self.curve.b;
        let n = us.len();
        let x = nu.clamp(us[0], us[n - 1]);
        let lo = (((x - u0) * inv_du) as usize).min(n - 2);
        let (b0, b1) = (b[lo], b[lo + 1]);
        if !b0.is_finite() || !b1.is_finite() {
            return f64::INFINITY;
        }
        let t = (x - us[lo]) / (us[lo + 1] - us[lo]);
        b0 + t * (b1 - b0)
    }
}

/// Everything the per-path loop needs, precomputed once per batch.
struct Prepared {
    mu1: f64,
    mu2: f64,
    q11: f64,
    q21: f64,
    sigma: f64,
    delta: f64,
    k: f64,
    nu0: f64,
    x0: f64,
    dt: f64,
    full_steps: usize,
    /// Length of the final partial step (0 when the horizon is a multiple).
    rem: f64,
    sqrt_dt: f64,
    /// `e^{-delta dt}` — per-step discount decay.
    e_step: f64,
    /// `(1 - e^{-delta dt}) / delta` — exact payout integral per unit rate.
    pay_factor: f64,
}

fn prepare(
    params: &ModelParams,
    x0: f64,
    p0: &[f64],
    dt: f64,
    horizon: f64,
) -> Result<Prepared, ModelError> {
    params.validate()?;
    params.require_two_state("montecarlo")?;
    if !x0.is_finite() {
        return Err(ModelError::invalid("x0", "must be finite"));
    }
    if p0.len() != params.m {
        return Err(ModelError::invalid(
            "p0",
            format!("has {} entries, model has {} regimes", p0.len(), params.m),
        ));
    }
    let mut sum = 0.0;
    for &w in p0 {
        if !w.is_finite() || w < 0.0 {
            return Err(ModelError::invalid(
                "p0",
                "entries must be finite and nonnegative",
            ));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(ModelError::invalid(
            "p0",
            format!("sums to {sum}, expected 1 within {SUM_TOL:e}"),
        ));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(ModelError::invalid("dt", "must be strictly positive"));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(ModelError::invalid("horizon", "must be strictly positive"));
    }
    let steps_hint = horizon / dt;
    if steps_hint > MAX_STEPS_PER_PATH as f64 {
        return Err(ModelError::invalid(
            "horizon",
            format!("{steps_hint:.0} steps per path exceeds {MAX_STEPS_PER_PATH}"),
        ));
    }
    let full_steps = (steps_hint + 1e-9).floor() as usize;
    let mut rem = horizon - full_steps as f64 * dt;
    if rem <= dt * 1e-9 {
        rem = 0.0;
    }
    let (mu1, mu2) = (params.mu[0], params.mu[1]);
    let gap = mu1 - mu2;
    let nu_raw = nu_from_head(&params.mu, &p0[..params.m - 1]);
    Ok(Prepared {
        mu1,
        mu2,
        q11: params.q[0][0],
        q21: params.q[1][0],
        sigma: params.sigma,
        delta: params.delta,
        k: params.k,
        nu0: nu_raw.clamp(mu2 + SIMPLEX_FLOOR * gap, mu1 - SIMPLEX_FLOOR * gap),
        x0,
        dt,
        full_steps,
        rem,
        sqrt_dt: dt.sqrt(),
        e_step: (-params.delta * dt).exp(),
        pay_factor: -(-params.delta * dt).exp_m1() / params.delta,
    })
}

/// One Euler step of the coupled (surplus, estimate) system plus the exact
/// payout accounting. Returns the ruin outcome if the surplus crossed zero.
#[inline]
#[allow(clippy::too_many_arguments)]
fn advance(
    c: &Prepared,
    lookup: &Lookup,
    x: &mut f64,
    nu: &mut f64,
    disc: &mut f64,
    payout: &mut f64,
    t: f64,
    dt: f64,
    sqrt_dt: f64,
    e_step: f64,
    pay_factor: f64,
    rng: &mut ChaCha8Rng,
) -> Option<PathOutcome> {
    let u = if *x >= lookup.b_at(*nu) { c.k } else { 0.0 };
    let z: f64 = rng.sample(StandardNormal);
    let dw = sqrt_dt * z;
    let x_next = *x + (*nu - u) * dt + c.sigma * dw;
    if x_next <= 0.0 {
        // Linear interpolation of the crossing inside the step, paying the
        // same fraction of the step's discounted payout.
        let f = *x / (*x - x_next);
        *payout += u * *disc * -(-c.delta * f * dt).exp_m1() / c.delta;
        return Some(PathOutcome {
            payout: *payout,
            ruin_time: Some(t + f * dt),
        });
    }
    *payout += u * *disc * pay_factor;
    *disc *= e_step;
    let dz = *nu * dt + c.sigma * dw;
    *nu = nu_step_raw(c.mu1, c.mu2, c.q11, c.q21, c.sigma, *nu, dz, dt);
    *x = x_next;
    None
}

fn run_path(c: &Prepared, lookup: &Lookup, rng: &mut ChaCha8Rng) -> PathOutcome {
    if c.x0 <= 0.0 {
        return PathOutcome {
            payout: 0.0,
            ruin_time: Some(0.0),
        };
    }
    let mut x = c.x0;
    let mut nu = c.nu0;
    let mut disc = 1.0;
    let mut payout = 0.0;
    for k in 0..c.full_steps {
        if let Some(done) = advance(
            c,
            lookup,
            &mut x,
            &mut nu,
            &mut disc,
            &mut payout,
            k as f64 * c.dt,
            c.dt,
            c.sqrt_dt,
            c.e_step,
            c.pay_factor,
            rng,
        ) {
            return done;
        }
    }
    if c.rem > 0.0 {
        let e_rem = (-c.delta * c.rem).exp();
        if let Some(done) = advance(
            c,
            lookup,
            &mut x,
            &mut nu,
            &mut disc,
            &mut payout,
            c.full_steps as f64 * c.dt,
            c.rem,
            c.rem.sqrt(),
            e_rem,
            -(-c.delta * c.rem).exp_m1() / c.delta,
            rng,
        ) {
            return done;
        }
    }
    PathOutcome {
        payout,
        ruin_time: None,
    }
}

/// Simulates one controlled path and reports its discounted dividends and
/// (if ruined) the interpolated ruin time.
///
/// A start at or below zero is immediate ruin with zero payout. The path
/// drawn here is identical to path 0 of the batch runners with the same
/// seed.
#[allow(clippy::too_many_arguments)]
pub fn simulate_controlled_path(
    params: &ModelParams,
    threshold: &ThresholdCurve,
    x0: f64,
    p0: &[f64],
    dt: f64,
    horizon: f64,
    seed: u64,
) -> Result<PathOutcome, ModelError> {
    let c = prepare(params, x0, p0, dt, horizon)?;
    let lookup = Lookup::new(threshold);
    Ok(run_path(&c, &lookup, &mut stream_rng(seed, 0)))
}

/// Simulates `n_paths` independent controlled paths.
///
/// Path `i` uses RNG stream `i` of `seed`, so the batch is reproducible
/// bit for bit whatever the thread count; outcomes are returned in path
/// order. `horizon = None` picks [`default_horizon`].
#[allow(clippy::too_many_arguments)]
pub fn simulate_strategy_paths(
    params: &ModelParams,
    threshold: &ThresholdCurve,
    x0: f64,
    p0: &[f64],
    n_paths: usize,
    dt: f64,
    horizon: Option<f64>,
    seed: u64,
) -> Result<Vec<PathOutcome>, ModelError> {
    if n_paths < 100 {
        return Err(ModelError::invalid(
            "n_paths",
            "at least 100 paths are required",
        ));
    }
    let horizon = horizon.unwrap_or_else(|| default_horizon(params));
    let c = prepare(params, x0, p0, dt, horizon)?;
    let lookup = Lookup::new(threshold);
    Ok((0..n_paths)
        .into_par_iter()
        .with_min_len(256)
        .map(|p| run_path(&c, &lookup, &mut stream_rng(seed, p as u64)))
        .collect())
}

/// Averages the discounted payout over independent paths.
///
/// The estimate is the plain sample mean (accumulated in path order, so it
/// is deterministic for a given seed), the error bar the sample standard
/// deviation over `sqrt(n_paths)`, and the reported truncation bias the
/// analytic bound `e^{-delta horizon} K / delta`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_strategy(
    params: &ModelParams,
    threshold: &ThresholdCurve,
    x0: f64,
    p0: &[f64],
    n_paths: usize,
    dt: f64,
    horizon: Option<f64>,
    seed: u64,
) -> Result<StrategyEvaluation, ModelError> {
    let outcomes = simulate_strategy_paths(params, threshold, x0, p0, n_paths, dt, horizon, seed)?;
    Ok(summarize_outcomes(params, horizon, &outcomes))
}

/// Collapses a batch of path outcomes into the evaluation summary;
/// `horizon = None` reports [`default_horizon`] (the batch runners' own
/// default). Sums run in path order, so the summary is as deterministic as
/// the batch itself.
pub fn summarize_outcomes(
    params: &ModelParams,
    horizon: Option<f64>,
    outcomes: &[PathOutcome],
) -> StrategyEvaluation {
    let horizon = horizon.unwrap_or_else(|| default_horizon(params));
    let n = outcomes.len() as f64;
    let mut sum = 0.0;
    let mut ruined = 0usize;
    for o in outcomes {
        sum += o.payout;
        ruined += o.ruin_time.is_some() as usize;
    }
    let mean = sum / n;
    let mut ss = 0.0;
    for o in outcomes {
        let d = o.payout - mean;
        ss += d * d;
    }
    let std_error = (ss / (n - 1.0).max(1.0)).sqrt() / n.sqrt();
    StrategyEvaluation {
        estimate: mean,
        std_error,
        n_paths: outcomes.len(),
        ruin_fraction: ruined as f64 / n,
        horizon,
        truncation_bias: (-params.delta * horizon).exp() * params.payout_bound(),
    }
}

/// Summarizes the ruin-time distribution under a strategy: ruin fraction
/// and linearly interpolated quantiles of the ruined paths' times at the
/// levels in [`RUIN_QUANTILES`]. Uses the same paths as
/// [`evaluate_strategy`] for the same seed.
#[allow(clippy::too_many_arguments)]
pub fn ruin_statistics(
    params: &ModelParams,
    threshold: &ThresholdCurve,
    x0: f64,
    p0: &[f64],
    n_paths: usize,
    dt: f64,
    horizon: Option<f64>,
    seed: u64,
) -> Result<RuinStatistics, ModelError> {
    let outcomes = simulate_strategy_paths(params, threshold, x0, p0, n_paths, dt, horizon, seed)?;
    let horizon = horizon.unwrap_or_else(|| default_horizon(params));
    let mut times: Vec<f64> = outcomes.iter().filter_map(|o| o.ruin_time).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantiles = if times.is_empty() {
        Vec::new()
    } else {
        RUIN_QUANTILES
            .iter()
            .map(|&q| {
                let pos = q * (times.len() - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = pos.ceil() as usize;
                let t = pos - lo as f64;
                (q, times[lo] + t * (times[hi] - times[lo]))
            })
            .collect()
    };
    Ok(RuinStatistics {
        ruin_fraction: times.len() as f64 / outcomes.len() as f64,
        n_ruined: times.len(),
        n_paths: outcomes.len(),
        horizon,
        quantiles,
    })
}
