//! Problem data and filter-state algebra.
//!
//! The surplus of an insurance portfolio follows a diffusion whose drift is
//! set by a hidden continuous-time Markov chain: while the chain sits in
//! state `i` the surplus gains drift `mu[i]`, and the volatility `sigma` is
//! constant across states. The chain itself is never observed; everything
//! downstream works with the conditional state probabilities `pi` (a point
//! on the probability simplex) and with the induced drift estimate
//! `nu = sum_i mu[i] * pi[i]`.
//!
//! This module owns the parameter set, its validation rules, the simplex
//! state type used by the filter, and the affine maps between the simplex
//! and the drift-estimate coordinate.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Interior floor applied to filter coordinates after each simulation step.
///
/// The exact filter never touches the simplex boundary, but an Euler step
/// can overshoot it; clamping to `[FLOOR, 1 - FLOOR]` and renormalizing
/// restores the interior property at machine scale.
pub const SIMPLEX_FLOOR: f64 = 1e-10;

/// Absolute tolerance for generator row sums and prior normalization.
pub const SUM_TOL: f64 = 1e-12;

/// Validation or I/O failure while building a parameter set.
#[derive(Debug, Clone, Error)]
pub enum ModelError {
    /// A parameter violates one of the documented invariants. `field` names
    /// the offending entry; `reason` says which invariant failed.
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    /// A parameter file could not be read or parsed.
    #[error("parameter file `{path}`: {reason}")]
    File { path: String, reason: String },
}

impl ModelError {
    pub(crate) fn invalid(field: &'static str, reason: impl fmt::Display) -> Self {
        ModelError::Invalid {
            field,
            reason: reason.to_string(),
        }
    }
}

/// Full description of one problem instance.
///
/// Serialized as JSON with the field names shown in the `serde` attributes;
/// unknown keys are rejected so that typos in config files fail loudly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Number of chain states (at least 2).
    #[serde(rename = "M")]
    pub m: usize,
    /// Per-state surplus drifts, strictly decreasing: `mu[0] > ... > mu[M-1]`.
    pub mu: Vec<f64>,
    /// Volatility of the surplus, common to all states; strictly positive.
    pub sigma: f64,
    /// Chain generator, row-major `M x M`: nonnegative off-diagonals and
    /// each row summing to zero.
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    /// Discount rate applied to the dividend stream; strictly positive.
    pub delta: f64,
    /// Cap on the dividend payout rate; strictly positive.
    #[serde(rename = "K")]
    pub k: f64,
    /// Prior distribution of the initial chain state; strictly positive
    /// entries summing to one.
    pub p: Vec<f64>,
}

impl ModelParams {
    /// Convenience constructor for the two-state problem.
    ///
    /// `q11 <= 0` is the rate out of state 1 (negated), `q21 >= 0` the rate
    /// from state 2 into state 1; rows are completed so each sums to zero.
    pub fn two_state(
        mu1: f64,
        mu2: f64,
        sigma: f64,
        delta: f64,
        q11: f64,
        q21: f64,
        k: f64,
        p1: f64,
    ) -> Self {
        ModelParams {
            m: 2,
            mu: vec![mu1, mu2],
            sigma,
            q: vec![vec![q11, -q11], vec![q21, -q21]],
            delta,
            k,
            p: vec![p1, 1.0 - p1],
        }
    }

    /// Checks every structural invariant, reporting the first violation
    /// together with the offending field name.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.m < 2 {
            return Err(ModelError::invalid("M", "must be at least 2"));
        }
        if self.mu.len() != self.m {
            return Err(ModelError::invalid(
                "mu",
                format!("expected {} entries, found {}", self.m, self.mu.len()),
            ));
        }
        if self.mu.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::invalid("mu", "entries must be finite"));
        }
        for w in self.mu.windows(2) {
            if !(w[0] > w[1]) {
                return Err(ModelError::invalid(
                    "mu",
                    format!("must be strictly decreasing, found {} <= {}", w[0], w[1]),
                ));
            }
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(ModelError::invalid("sigma", "must be strictly positive"));
        }
        if self.q.len() != self.m {
            return Err(ModelError::invalid(
                "Q",
                format!("expected {} rows, found {}", self.m, self.q.len()),
            ));
        }
        for (i, row) in self.q.iter().enumerate() {
            if row.len() != self.m {
                return Err(ModelError::invalid(
                    "Q",
                    format!("row {} has {} entries, expected {}", i, row.len(), self.m),
                ));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(ModelError::invalid(
                    "Q",
                    format!("row {} has a non-finite entry", i),
                ));
            }
            for (j, &v) in row.iter().enumerate() {
                if i != j && v < 0.0 {
                    return Err(ModelError::invalid(
                        "Q",
                        format!("off-diagonal entry ({i},{j}) = {v} is negative"),
                    ));
                }
            }
            let s: f64 = row.iter().sum();
            if s.abs() > SUM_TOL {
                return Err(ModelError::invalid(
                    "Q",
                    format!("row {} sums to {s:e}, not a generator row", i),
                ));
            }
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(ModelError::invalid("delta", "must be strictly positive"));
        }
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(ModelError::invalid("K", "must be strictly positive"));
        }
        if self.p.len() != self.m {
            return Err(ModelError::invalid(
                "p",
                format!("expected {} entries, found {}", self.m, self.p.len()),
            ));
        }
        if self.p.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::invalid("p", "entries must be finite"));
        }
        for (i, &v) in self.p.iter().enumerate() {
            if !(v > 0.0) {
                return Err(ModelError::invalid(
                    "p",
                    format!("entry {i} = {v} is not strictly positive"),
                ));
            }
        }
        let s: f64 = self.p.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(ModelError::invalid(
                "p",
                format!("sums to {s}, expected 1 within {SUM_TOL:e}"),
            ));
        }
        Ok(())
    }

    /// Parses and validates a parameter set from a JSON string.
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let params: ModelParams = serde_json::from_str(text).map_err(|e| ModelError::File {
            path: "<inline>".into(),
            reason: e.to_string(),
        })?;
        params.validate()?;
        Ok(params)
    }

    /// Reads and validates a parameter set from a JSON file.
    pub fn from_json_file(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::File {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let params: ModelParams = serde_json::from_str(&text).map_err(|e| ModelError::File {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        params.validate()?;
        Ok(params)
    }

    /// Largest drift, `mu[0]`.
    pub fn mu_top(&self) -> f64 {
        self.mu[0]
    }

    /// Smallest drift, `mu[M-1]`.
    pub fn mu_bottom(&self) -> f64 {
        self.mu[self.m - 1]
    }

    /// Upper bound `K / delta` on any discounted dividend stream: paying at
    /// the cap forever from time zero earns exactly this much.
    pub fn payout_bound(&self) -> f64 {
        self.k / self.delta
    }

    /// Requires the two-state specialisation used by the PDE solver and the
    /// drift-estimate coordinate.
    pub(crate) fn require_two_state(&self, field: &'static str) -> Result<(), ModelError> {
        if self.m != 2 {
            return Err(ModelError::invalid(
                field,
                format!("only defined for M = 2 (got M = {})", self.m),
            ));
        }
        Ok(())
    }
}

/// Conditional distribution of the hidden chain at a point in time.
///
/// Only the first `M - 1` coordinates are stored; the last one is derived as
/// `1 - sum(head)`, so normalization can never drift.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    head: Vec<f64>,
    time: f64,
}

impl FilterState {
    /// Builds a state from all `M` simplex coordinates, checking that they
    /// lie in `[0, 1]` and sum to one within [`SUM_TOL`].
    pub fn new(pi: &[f64], time: f64) -> Result<Self, ModelError> {
        if pi.len() < 2 {
            return Err(ModelError::invalid("pi", "needs at least 2 coordinates"));
        }
        if pi.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::invalid("pi", "entries must be finite"));
        }
        for (i, &v) in pi.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(ModelError::invalid(
                    "pi",
                    format!("entry {i} = {v} outside [0, 1]"),
                ));
            }
        }
        let s: f64 = pi.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(ModelError::invalid(
                "pi",
                format!("sums to {s}, expected 1 within {SUM_TOL:e}"),
            ));
        }
        if !time.is_finite() {
            return Err(ModelError::invalid("time", "must be finite"));
        }
        Ok(FilterState {
            head: pi[..pi.len() - 1].to_vec(),
            time,
        })
    }

    /// Builds a state directly from the stored head coordinates.
    pub(crate) fn from_head(head: Vec<f64>, time: f64) -> Self {
        FilterState { head, time }
    }

    /// Number of chain states this distribution covers.
    pub fn m(&self) -> usize {
        self.head.len() + 1
    }

    /// The stored first `M - 1` coordinates.
    pub fn head(&self) -> &[f64] {
        &self.head
    }

    /// Time stamp the distribution refers to.
    pub fn time(&self) -> f64 {
        self.time
    }

    /// Probability of state `i` (zero-based); the last one is derived.
    pub fn pi(&self, i: usize) -> f64 {
        if i < self.head.len() {
            self.head[i]
        } else {
            debug_assert_eq!(i, self.head.len());
            1.0 - self.head.iter().sum::<f64>()
        }
    }

    /// All `M` coordinates, the last derived from the head.
    pub fn pi_full(&self) -> Vec<f64> {
        let mut v = self.head.clone();
        v.push(1.0 - self.head.iter().sum::<f64>());
        v
    }

    /// Clamps every coordinate into `[SIMPLEX_FLOOR, 1 - SIMPLEX_FLOOR]` and
    /// renormalizes, keeping the state strictly inside the simplex.
    pub fn clamp_interior(&mut self) {
        project_interior(&mut self.head);
    }
}

/// In-place interior projection of the head coordinates (the derived last
/// coordinate is clamped implicitly through rescaling).
pub(crate) fn project_interior(head: &mut [f64]) {
    let f = SIMPLEX_FLOOR;
    for _ in 0..4 {
        let mut s_head = 0.0;
        for e in head.iter_mut() {
            *e = e.clamp(f, 1.0 - f);
            s_head += *e;
        }
        let tail = (1.0 - s_head).clamp(f, 1.0 - f);
        let s = s_head + tail;
        if (s - 1.0).abs() <= 1e-15 {
            return;
        }
        // Rescaling the head by 1/s rescales the derived tail too, so the
        // whole vector is renormalized even though only the head is stored.
        let inv = 1.0 / s;
        for e in head.iter_mut() {
            *e *= inv;
        }
    }
    for e in head.iter_mut() {
        *e = e.clamp(f, 1.0 - f);
    }
}

/// Drift estimate from head coordinates: `mu[M-1] + sum_j (mu[j] - mu[M-1]) * head[j]`.
pub(crate) fn nu_from_head(mu: &[f64], head: &[f64]) -> f64 {
    let mu_last = mu[mu.len() - 1];
    let mut nu = mu_last;
    for (j, h) in head.iter().enumerate() {
        nu += (mu[j] - mu_last) * h;
    }
    nu
}

/// Conditional drift estimate `nu = sum_i mu[i] * pi[i]`.
///
/// Computed from the stored head coordinates so the result is an exact
/// affine function of the state representation.
pub fn nu_from_pi(params: &ModelParams, state: &FilterState) -> Result<f64, ModelError> {
    params.validate()?;
    if state.m() != params.m {
        return Err(ModelError::invalid(
            "pi",
            format!("state covers {} regimes, model has {}", state.m(), params.m),
        ));
    }
    Ok(nu_from_head(&params.mu, state.head()))
}

/// Inverts the drift-estimate map in the two-state case:
/// `pi = ((nu - mu2) / (mu1 - mu2), 1 - ...)` at time zero.
///
/// Values of `nu` outside `[mu2, mu1]` (beyond a machine-scale guard) are
/// rejected because no distribution produces them.
pub fn pi_from_nu(params: &ModelParams, nu: f64) -> Result<FilterState, ModelError> {
    params.validate()?;
    params.require_two_state("nu")?;
    let (mu1, mu2) = (params.mu[0], params.mu[1]);
    let gap = mu1 - mu2;
    let slack = 1e-12 * gap.max(1.0);
    if !nu.is_finite() || nu < mu2 - slack || nu > mu1 + slack {
        return Err(ModelError::invalid(
            "nu",
            format!("{nu} outside the drift range [{mu2}, {mu1}]"),
        ));
    }
    let h = ((nu - mu2) / gap).clamp(0.0, 1.0);
    Ok(FilterState::from_head(vec![h], 0.0))
}

/// Two-state drift estimate from the first simplex coordinate.
#[cfg(test)]
pub(crate) fn nu_from_pi1(mu1: f64, mu2: f64, pi1: f64) -> f64 {
    mu2 + (mu1 - mu2) * pi1
}
