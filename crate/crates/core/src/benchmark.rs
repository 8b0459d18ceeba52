//! Closed-form references and observable-case reductions.
//!
//! With a single drift regime (no switching, drift known) the dividend
//! problem has an explicit solution: below a threshold `b` the value is a
//! combination of the two exponentials solving the no-payout equation, above
//! it the payout saturates the cap and the value decays exponentially
//! towards `K/delta`. The threshold is fixed by smooth fit — matching the
//! derivative to one from both sides — or collapses to zero when even the
//! always-pay value starts with slope at most one.
//!
//! These solutions seed and cross-check the two-dimensional solver:
//! [`bayesian_case`] re-solves the PDE with the generator zeroed (drift
//! never switches, only beliefs move), and [`k_sweep`] tracks the payout
//! boundary as the cap grows.

use crate::hjb::{
    epsilon_profile, EpsilonProfile, Mesh, SolveError, SolveOutput, ThresholdCurve,
    DEFAULT_EPS, DEFAULT_MAX_ITER, DEFAULT_VALUE_TOL,
};
use crate::model::ModelParams;

/// Explicit single-regime solution.
///
/// `value`, `derivative` and `second_derivative` are exact on `[0, inf)`;
/// the pieces meet at [`threshold`](SingleRegimeSolution::threshold) with
/// matching value and slope (and matching curvature when the threshold is
/// interior).
#[derive(Debug, Clone)]
pub struct SingleRegimeSolution {
    pub mu: f64,
    pub sigma: f64,
    pub delta: f64,
    pub k: f64,
    /// Optimal payout threshold (zero when paying immediately is optimal).
    pub threshold: f64,
    /// Positive root of the no-payout characteristic equation.
    pub r_plus: f64,
    /// Negative root of the no-payout characteristic equation.
    pub r_minus: f64,
    /// Negative root of the capped-payout characteristic equation.
    pub theta_minus: f64,
    /// Coefficient of `exp(theta_minus (x - b))` in the upper piece.
    c_up: f64,
    /// `exp((r_minus - r_plus) b)`, cached for the stable lower piece.
    w_b: f64,
}

impl SingleRegimeSolution {
    /// Value at surplus `x >= 0`.
    pub fn value(&self, x: f64) -> f64 {
        let b = self.threshold;
        if x <= 0.0 {
            return 0.0;
        }
        if x < b {
            let num = (self.r_plus * (x - b)).exp() - (self.r_minus * x - self.r_plus * b).exp();
            num / (self.r_plus - self.r_minus * self.w_b)
        } else {
            self.k / self.delta + self.c_up * (self.theta_minus * (x - b)).exp()
        }
    }

    /// First derivative of the value.
    pub fn derivative(&self, x: f64) -> f64 {
        let b = self.threshold;
        if x < b {
            let num = self.r_plus * (self.r_plus * (x - b)).exp()
                - self.r_minus * (self.r_minus * x - self.r_plus * b).exp();
            num / (self.r_plus - self.r_minus * self.w_b)
        } else {
            self.c_up * self.theta_minus * (self.theta_minus * (x - b)).exp()
        }
    }

    /// Second derivative of the value.
    pub fn second_derivative(&self, x: f64) -> f64 {
        let b = self.threshold;
        if x < b {
            let num = self.r_plus * self.r_plus * (self.r_plus * (x - b)).exp()
                - self.r_minus * self.r_minus * (self.r_minus * x - self.r_plus * b).exp();
            num / (self.r_plus - self.r_minus * self.w_b)
        } else {
            self.c_up * self.theta_minus * self.theta_minus * (self.theta_minus * (x - b)).exp()
        }
    }

    /// Residual of the stationary equation at `x` under the policy the
    /// solution claims optimal (no payout below the threshold, cap above).
    pub fn equation_residual(&self, x: f64) -> f64 {
        let u = if x >= self.threshold { self.k } else { 0.0 };
        0.5 * self.sigma * self.sigma * self.second_derivative(x)
            + (self.mu - u) * self.derivative(x)
            - self.delta * self.value(x)
            + u
    }
}

fn check_positive(field: &'static str, v: f64) -> Result<(), SolveError> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(SolveError::BadInput(format!(
            "{field} = {v} must be strictly positive"
        )));
    }
    Ok(())
}

/// Solves the single-regime problem in closed form.
///
/// The threshold is the root of the smooth-fit mismatch, bisected to an
/// interval of width 1e-12 (the mismatch itself lands far below 1e-10); it
/// is exactly zero when the always-pay solution already has initial slope
/// at most one.
pub fn single_regime_threshold(
    mu: f64,
    sigma: f64,
    delta: f64,
    k: f64,
) -> Result<SingleRegimeSolution, SolveError> {
    if !mu.is_finite() {
        return Err(SolveError::BadInput(format!("mu = {mu} must be finite")));
    }
    check_positive("sigma", sigma)?;
    check_positive("delta", delta)?;
    check_positive("K", k)?;

    let s2 = sigma * sigma;
    let disc0 = (mu * mu + 2.0 * s2 * delta).sqrt();
    let r_plus = (-mu + disc0) / s2;
    let r_minus = (-mu - disc0) / s2;
    let mk = mu - k;
    let disc_k = (mk * mk + 2.0 * s2 * delta).sqrt();
    let theta_minus = (-mk - disc_k) / s2;

    // Value the upper piece must reach at the threshold under smooth fit.
    let target = k / delta + 1.0 / theta_minus;

    // Lower-piece value at its own threshold when the slope there is one:
    // increasing in b from 0 towards 1/r_plus.
    let f = |b: f64| {
        let w = ((r_minus - r_plus) * b).exp();
        (1.0 - w) / (r_plus - r_minus * w)
    };

    let threshold;
    if target <= 0.0 {
        // Even paying from zero surplus keeps the marginal value below one.
        threshold = 0.0;
    } else {
        debug_assert!(
            target < 1.0 / r_plus + 1e-12,
            "smooth-fit target exceeds the reachable range"
        );
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        let mut guard = 0;
        while f(hi) - target < 0.0 {
            hi *= 2.0;
            guard += 1;
            if guard > 60 {
                return Err(SolveError::BadInput(format!(
                    "smooth-fit root not bracketed below b = {hi:e} \
                     (mu={mu}, sigma={sigma}, delta={delta}, K={k})"
                )));
            }
        }
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if f(mid) - target < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        threshold = 0.5 * (lo + hi);
    }

    let c_up = if threshold > 0.0 {
        1.0 / theta_minus
    } else {
        -k / delta
    };
    Ok(SingleRegimeSolution {
        mu,
        sigma,
        delta,
        k,
        threshold,
        r_plus,
        r_minus,
        theta_minus,
        c_up,
        w_b: ((r_minus - r_plus) * threshold).exp(),
    })
}

/// Expected discounted payout of the strategy that always pays at the cap,
/// starting from surplus `x0`: `(K/delta) * (1 - exp(theta_minus * x0))`.
pub fn always_pay_value(mu: f64, sigma: f64, delta: f64, k: f64, x0: f64) -> f64 {
    let s2 = sigma * sigma;
    let mk = mu - k;
    let theta_minus = (-mk - (mk * mk + 2.0 * s2 * delta).sqrt()) / s2;
    k / delta * (1.0 - (theta_minus * x0.max(0.0)).exp())
}

/// Ruin probability of an uncontrolled surplus with constant drift `mu > 0`
/// and volatility `sigma`, started at `x0 >= 0`: `exp(-2 mu x0 / sigma^2)`.
pub fn ruin_probability_never_pay(mu: f64, sigma: f64, x0: f64) -> f64 {
    (-2.0 * mu * x0.max(0.0) / (sigma * sigma)).exp()
}

/// Re-solves the problem with the chain frozen (generator zeroed): beliefs
/// still wander with the observations, but the truth never switches. The
/// comparison between this solution and the switching one isolates the
/// value of anticipating regime changes.
pub fn bayesian_case(
    params: &ModelParams,
    mesh: &Mesh,
    eps_profile: &EpsilonProfile,
) -> Result<SolveOutput, SolveError> {
    params.validate()?;
    params.require_two_state("M")?;
    let mut frozen = params.clone();
    frozen.q = vec![vec![0.0; params.m]; params.m];
    frozen.validate()?;
    crate::hjb::run_on_mesh(&frozen, mesh, eps_profile, DEFAULT_MAX_ITER, DEFAULT_VALUE_TOL)
}

/// One payout-cap entry of a sweep.
#[derive(Debug, Clone)]
pub struct KSweepEntry {
    pub k: f64,
    pub threshold: ThresholdCurve,
}

/// Solves the same problem for a ladder of payout caps on a fixed mesh and
/// returns the threshold curve of each, in the input order.
///
/// The caps must be strictly increasing and positive. Uses the default
/// floor level and ramp width.
pub fn k_sweep(
    params: &ModelParams,
    mesh: &Mesh,
    k_list: &[f64],
) -> Result<Vec<KSweepEntry>, SolveError> {
    params.validate()?;
    params.require_two_state("M")?;
    if k_list.is_empty() {
        return Err(SolveError::BadInput("empty cap list".into()));
    }
    for w in k_list.windows(2) {
        if !(w[1] > w[0]) {
            return Err(SolveError::BadInput(format!(
                "cap list must be strictly increasing, found {} -> {}",
                w[0], w[1]
            )));
        }
    }
    if !(k_list[0] > 0.0) {
        return Err(SolveError::BadInput(format!(
            "caps must be positive, found {}",
            k_list[0]
        )));
    }
    let zeta = crate::hjb::default_zeta(params);
    let profile = epsilon_profile(params, DEFAULT_EPS, zeta, mesh)?;
    let mut out = Vec::with_capacity(k_list.len());
    for &cap in k_list {
        let mut p = params.clone();
        p.k = cap;
        p.validate()?;
        let solved = crate::hjb::run_on_mesh(&p, mesh, &profile, DEFAULT_MAX_ITER, DEFAULT_VALUE_TOL)?;
        out.push(KSweepEntry {
            k: cap,
            threshold: solved.threshold,
        });
    }
    Ok(out)
}
