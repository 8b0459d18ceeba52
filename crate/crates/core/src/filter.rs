//! Hidden-chain simulation, observation synthesis, and filter recursion.
//!
//! Three layers build on each other:
//!
//! 1. [`simulate_chain`] draws an exact trajectory of the modulating chain
//!    (exponential holding times, embedded jump distribution) and samples it
//!    on a uniform time grid.
//! 2. [`observe`] integrates the surplus increments over each grid step,
//!    `dZ_k = mu[state_k] dt + sigma dW_k`, producing the observation stream
//!    the filter is allowed to see.
//! 3. [`wonham_step`] / [`nu_step`] advance the conditional state
//!    probabilities by one Euler step driven by an observed increment; the
//!    innovation `dW = (dZ - nu dt) / sigma` replaces the unobservable noise.
//!
//! For two states the whole simplex state collapses to the scalar drift
//! estimate `nu`, and [`nu_step`] evolves that coordinate directly; the two
//! parameterizations agree exactly, step by step, because the Euler update
//! commutes with the affine coordinate map.

use crate::model::{
    nu_from_head, project_interior, FilterState, ModelError, ModelParams, SIMPLEX_FLOOR,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

/// RNG stream used for chain trajectories.
const CHAIN_STREAM: u64 = 0;
/// RNG stream used for observation noise (independent of the chain stream).
const OBS_STREAM: u64 = 1;

/// Deterministic generator for (seed, stream) pairs. Distinct streams of the
/// same seed are independent, which keeps chain and observation noise
/// decoupled while the whole simulation stays reproducible from one seed.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One chain trajectory sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct ChainPath {
    /// Grid times `t_k = k * dt`, `k = 0..=n`.
    pub times: Vec<f64>,
    /// Chain state (zero-based) at each grid time.
    pub states: Vec<usize>,
    /// Exact jump epochs inside `[0, horizon]`, in increasing order.
    pub jump_times: Vec<f64>,
}

/// A filter trajectory aligned with the observation grid.
#[derive(Debug, Clone)]
pub struct FilterPath {
    /// Grid times `t_k = k * dt`, `k = 0..=n`.
    pub times: Vec<f64>,
    /// Conditional state distribution at each grid time.
    pub pis: Vec<FilterState>,
    /// Drift estimate at each grid time, `nus[k] = nu(pis[k])` exactly.
    pub nus: Vec<f64>,
    /// Observed increments; `observations[k]` covers `[t_k, t_{k+1}]`, so
    /// there is one fewer entry than grid times.
    pub observations: Vec<f64>,
}

fn check_grid(horizon: f64, dt: f64) -> Result<usize, ModelError> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(ModelError::invalid("horizon", "must be strictly positive"));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(ModelError::invalid("dt", "must be strictly positive"));
    }
    let n = (horizon / dt).ceil() as usize;
    if n == 0 {
        return Err(ModelError::invalid("horizon", "shorter than one step"));
    }
    if n > 500_000_000 {
        return Err(ModelError::invalid(
            "dt",
            format!("grid of {n} steps is beyond the supported size"),
        ));
    }
    Ok(n)
}

fn sample_categorical(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Simulates the hidden chain exactly and samples it on the grid
/// `t_k = k * dt` covering `[0, horizon]`.
///
/// The initial state is drawn from the prior `p`; holding times are
/// exponential with rate `-Q[i][i]` and the jump target is drawn from the
/// off-diagonal row weights. States between grid points are resolved by the
/// exact jump epochs, so no jump is ever missed regardless of `dt`.
pub fn simulate_chain(
    params: &ModelParams,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<ChainPath, ModelError> {
    params.validate()?;
    let n = check_grid(horizon, dt)?;
    let mut rng = stream_rng(seed, CHAIN_STREAM);

    let mut state = sample_categorical(&params.p, rng.gen::<f64>());
    let mut jump_times = Vec::new();
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);

    // Time at which the *next* jump occurs (infinite in absorbing states).
    let mut t = 0.0_f64;
    let mut next_jump = t + draw_holding(&mut rng, -params.q[state][state]);
    for k in 0..=n {
        let t_k = k as f64 * dt;
        while next_jump <= t_k {
            t = next_jump;
            if t <= horizon {
                jump_times.push(t);
            }
            state = draw_jump_target(&mut rng, &params.q, state);
            next_jump = t + draw_holding(&mut rng, -params.q[state][state]);
        }
        times.push(t_k);
        states.push(state);
    }
    // Jumps recorded lazily above stop at the last grid time; extend the
    // exact record to the full horizon if the grid overshoots it slightly.
    while next_jump <= horizon {
        let t_jump = next_jump;
        jump_times.push(t_jump);
        state = draw_jump_target(&mut rng, &params.q, state);
        next_jump = t_jump + draw_holding(&mut rng, -params.q[state][state]);
    }
    jump_times.retain(|&s| s <= horizon);
    Ok(ChainPath {
        times,
        states,
        jump_times,
    })
}

fn draw_holding(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    if rate <= 0.0 {
        f64::INFINITY
    } else {
        Exp::new(rate).expect("positive rate").sample(rng)
    }
}

fn draw_jump_target(rng: &mut ChaCha8Rng, q: &[Vec<f64>], from: usize) -> usize {
    let row = &q[from];
    let mut weights: Vec<f64> = row.to_vec();
    weights[from] = 0.0;
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return from;
    }
    sample_categorical(&weights, rng.gen::<f64>())
}

/// Synthesizes the observation increments along a chain path:
/// `dZ_k = mu[state_k] * dt_k + sigma * sqrt(dt_k) * N(0,1)`.
///
/// The noise stream is independent of the chain stream for the same seed.
pub fn observe(params: &ModelParams, chain: &ChainPath, seed: u64) -> Result<Vec<f64>, ModelError> {
    params.validate()?;
    if chain.times.len() < 2 || chain.states.len() != chain.times.len() {
        return Err(ModelError::invalid(
            "chain",
            "needs at least two aligned grid points",
        ));
    }
    if chain.states.iter().any(|&s| s >= params.m) {
        return Err(ModelError::invalid("chain", "state index out of range"));
    }
    let mut rng = stream_rng(seed, OBS_STREAM);
    let mut out = Vec::with_capacity(chain.times.len() - 1);
    for k in 0..chain.times.len() - 1 {
        let dt_k = chain.times[k + 1] - chain.times[k];
        let g: f64 = StandardNormal.sample(&mut rng);
        out.push(params.mu[chain.states[k]] * dt_k + params.sigma * dt_k.sqrt() * g);
    }
    Ok(out)
}

/// One Euler step of the conditional-probability recursion, written against
/// the stored head coordinates. `scratch` must have the same length as
/// `head`; it receives a copy of the pre-step head so the update reads
/// consistent old values without allocating.
pub(crate) fn wonham_step_head(
    params: &ModelParams,
    head: &mut [f64],
    scratch: &mut [f64],
    dz: f64,
    dt: f64,
) {
    let m = params.m;
    let mu = &params.mu;
    scratch.copy_from_slice(head);
    let nu = nu_from_head(mu, scratch);
    let dw = (dz - nu * dt) / params.sigma;
    let q = &params.q;
    for i in 0..m - 1 {
        // Drift: rate into state i from the last state, plus the head-state
        // corrections; diffusion: sensitivity of state i's likelihood to the
        // innovation.
        let mut drift = q[m - 1][i];
        for (j, &pj) in scratch.iter().enumerate() {
            drift += (q[j][i] - q[m - 1][i]) * pj;
        }
        let diffusion = scratch[i] * (mu[i] - nu) / params.sigma;
        head[i] = scratch[i] + drift * dt + diffusion * dw;
    }
    project_interior(head);
}

/// Advances the conditional state distribution by one observation increment.
///
/// The update drifts with the generator, corrects with the innovation
/// `dW = (dZ - nu dt) / sigma`, and finishes with the interior projection so
/// the result is always a strictly interior distribution.
pub fn wonham_step(
    params: &ModelParams,
    pi: &FilterState,
    dz: f64,
    dt: f64,
) -> Result<FilterState, ModelError> {
    params.validate()?;
    if pi.m() != params.m {
        return Err(ModelError::invalid(
            "pi",
            format!("state covers {} regimes, model has {}", pi.m(), params.m),
        ));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(ModelError::invalid("dt", "must be strictly positive"));
    }
    if !dz.is_finite() {
        return Err(ModelError::invalid("dZ", "must be finite"));
    }
    let mut head = pi.head().to_vec();
    let mut scratch = vec![0.0; head.len()];
    wonham_step_head(params, &mut head, &mut scratch, dz, dt);
    Ok(FilterState::from_head(head, pi.time() + dt))
}

/// One Euler step of the scalar drift-estimate recursion (two states only):
///
/// ```text
/// d nu = [ q11 (nu - mu2) + q21 (mu1 - nu) - (nu - mu2)(mu1 - nu) nu / sigma^2 ] dt
///        + (nu - mu2)(mu1 - nu) / sigma^2 dZ
/// ```
///
/// followed by a clamp to the open drift interval. The step is algebraically
/// identical to [`wonham_step`] mapped through the coordinate change, so
/// both parameterizations produce the same trajectory to machine precision.
pub fn nu_step(params: &ModelParams, nu: f64, dz: f64, dt: f64) -> Result<f64, ModelError> {
    params.validate()?;
    params.require_two_state("nu")?;
    let (mu1, mu2) = (params.mu[0], params.mu[1]);
    if !nu.is_finite() || nu < mu2 || nu > mu1 {
        return Err(ModelError::invalid(
            "nu",
            format!("{nu} outside the drift range [{mu2}, {mu1}]"),
        ));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(ModelError::invalid("dt", "must be strictly positive"));
    }
    if !dz.is_finite() {
        return Err(ModelError::invalid("dZ", "must be finite"));
    }
    let (q11, q21) = (params.q[0][0], params.q[1][0]);
    Ok(nu_step_raw(
        mu1,
        mu2,
        q11,
        q21,
        params.sigma,
        nu,
        dz,
        dt,
    ))
}

/// The arithmetic core of [`nu_step`], shared with the controlled-path
/// simulation so both advance the drift estimate with identical floating
/// point operations. Callers must have validated the inputs.
#[inline]
pub(crate) fn nu_step_raw(
    mu1: f64,
    mu2: f64,
    q11: f64,
    q21: f64,
    sigma: f64,
    nu: f64,
    dz: f64,
    dt: f64,
) -> f64 {
    let s2 = sigma * sigma;
    let spread = (mu1 - nu) * (nu - mu2);
    let drift = q11 * (nu - mu2) + q21 * (mu1 - nu) - spread * nu / s2;
    let next = nu + drift * dt + spread / s2 * dz;
    let gap = mu1 - mu2;
    next.clamp(mu2 + SIMPLEX_FLOOR * gap, mu1 - SIMPLEX_FLOOR * gap)
}

/// Simulates a full (chain, observation, filter) triple from one seed.
///
/// The filter starts at the model prior, consumes exactly the observation
/// increments returned in the path, and records the drift estimate at every
/// grid time; `nus[k]` is the exact affine image of `pis[k]`.
pub fn simulate_filter_path(
    params: &ModelParams,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<(ChainPath, FilterPath), ModelError> {
    params.validate()?;
    let chain = simulate_chain(params, horizon, dt, seed)?;
    let observations = observe(params, &chain, seed)?;

    let n = observations.len();
    let mut pis = Vec::with_capacity(n + 1);
    let mut nus = Vec::with_capacity(n + 1);
    let mut head = params.p[..params.m - 1].to_vec();
    let mut scratch = vec![0.0; head.len()];
    pis.push(FilterState::from_head(head.clone(), 0.0));
    nus.push(nu_from_head(&params.mu, &head));
    for (k, &dz) in observations.iter().enumerate() {
        let dt_k = chain.times[k + 1] - chain.times[k];
        wonham_step_head(params, &mut head, &mut scratch, dz, dt_k);
        pis.push(FilterState::from_head(head.clone(), chain.times[k + 1]));
        nus.push(nu_from_head(&params.mu, &head));
    }
    let times = chain.times.clone();
    Ok((
        chain,
        FilterPath {
            times,
            pis,
            nus,
            observations,
        },
    ))
}

/// Two-state helper: first simplex coordinate of a path state.
pub fn pi1_of(path: &FilterPath, k: usize) -> f64 {
    path.pis[k].head()[0]
}
