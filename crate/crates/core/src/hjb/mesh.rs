//! Tensor-product mesh for the (surplus, drift-estimate) rectangle.
//!
//! The surplus axis `[0, H]` carries a graded grid that packs extra nodes
//! into a band around the expected threshold locations — that is where the
//! value function bends and where threshold extraction needs resolution.
//! The drift-estimate axis `[mu2, mu1]` is uniform.
//!
//! Grading is done by inverting a piecewise-constant node density (1 outside
//! the band, `refine_factor` inside), which keeps spacings exactly uniform
//! within each zone and makes the fine/coarse ratio exactly the requested
//! factor.

use super::SolveError;
use crate::model::ModelParams;

/// Grid geometry shared by every field the solver produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    /// Surplus nodes, strictly increasing, `xs[0] = 0`, `xs[n_x] = H`.
    pub xs: Vec<f64>,
    /// Drift-estimate nodes, uniform, `us[0] = mu2`, `us[n_u] = mu1`.
    pub us: Vec<f64>,
    /// Refinement band `[lo, hi]` on the surplus axis.
    pub band: (f64, f64),
    /// Node-density ratio inside the band relative to outside.
    pub refine_factor: f64,
}

impl Mesh {
    /// Number of surplus intervals (`xs.len() - 1`).
    pub fn n_x(&self) -> usize {
        self.xs.len() - 1
    }

    /// Number of drift-estimate intervals (`us.len() - 1`).
    pub fn n_u(&self) -> usize {
        self.us.len() - 1
    }

    /// Total node count.
    pub fn n_nodes(&self) -> usize {
        self.xs.len() * self.us.len()
    }

    /// Flat index of node `(i, j)`; the drift-estimate index is fastest so
    /// the assembled operator has bandwidth `n_u + 2`.
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.us.len() + j
    }

    /// Largest surplus spacing.
    pub fn max_dx(&self) -> f64 {
        self.xs
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Smallest surplus spacing.
    pub fn min_dx(&self) -> f64 {
        self.xs
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Uniform drift-estimate spacing.
    pub fn du(&self) -> f64 {
        (self.us[self.n_u()] - self.us[0]) / self.n_u() as f64
    }

    /// Index of the surplus cell containing `x` (clamped to the domain):
    /// returns `i` with `xs[i] <= x <= xs[i+1]`.
    pub fn x_cell(&self, x: f64) -> usize {
        let n = self.n_x();
        if x <= self.xs[0] {
            return 0;
        }
        if x >= self.xs[n] {
            return n - 1;
        }
        // Binary search for the rightmost node <= x.
        let mut lo = 0usize;
        let mut hi = n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.xs[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Index of the drift-estimate cell containing `u` (clamped).
    pub fn u_cell(&self, u: f64) -> usize {
        let n = self.n_u();
        if u <= self.us[0] {
            return 0;
        }
        if u >= self.us[n] {
            return n - 1;
        }
        let mut lo = 0usize;
        let mut hi = n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.us[mid] <= u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Builds the graded tensor mesh.
///
/// Requirements: `h > 0`, `n_x >= 16`, `n_u >= 8`, `0 <= band.0 <= band.1 <= h`,
/// `refine_factor >= 1`. The drift-estimate axis spans `[mu[M-1], mu[0]]`.
pub fn build_mesh(
    params: &ModelParams,
    h: f64,
    n_x: usize,
    n_u: usize,
    band: (f64, f64),
    refine_factor: f64,
) -> Result<Mesh, SolveError> {
    params.validate()?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(SolveError::BadGrid("H must be strictly positive".into()));
    }
    if n_x < 16 {
        return Err(SolveError::BadGrid(format!(
            "n_x = {n_x} is below the minimum of 16"
        )));
    }
    if n_u < 8 {
        return Err(SolveError::BadGrid(format!(
            "n_u = {n_u} is below the minimum of 8"
        )));
    }
    let (lo, hi) = band;
    if !(0.0 <= lo && lo <= hi && hi <= h) {
        return Err(SolveError::BadGrid(format!(
            "band [{lo}, {hi}] must satisfy 0 <= lo <= hi <= H = {h}"
        )));
    }
    if !(refine_factor >= 1.0) || !refine_factor.is_finite() {
        return Err(SolveError::BadGrid(format!(
            "refine_factor = {refine_factor} must be at least 1"
        )));
    }

    let r = refine_factor;
    let w = hi - lo;
    // Cumulative node density: slope 1 outside the band, slope r inside.
    let total = h + (r - 1.0) * w;
    let step = total / n_x as f64;
    let mut xs = Vec::with_capacity(n_x + 1);
    for i in 0..=n_x {
        let a = i as f64 * step;
        let x = if a <= lo {
            a
        } else if a <= lo + r * w {
            lo + (a - lo) / r
        } else {
            hi + (a - lo - r * w)
        };
        xs.push(x);
    }
    xs[0] = 0.0;
    xs[n_x] = h;

    let mu1 = params.mu_top();
    let mu2 = params.mu_bottom();
    let mut us = Vec::with_capacity(n_u + 1);
    for j in 0..=n_u {
        us.push(mu2 + (mu1 - mu2) * j as f64 / n_u as f64);
    }
    us[0] = mu2;
    us[n_u] = mu1;

    for w in xs.windows(2) {
        if !(w[1] > w[0]) {
            return Err(SolveError::BadGrid(format!(
                "surplus grid not strictly increasing near x = {}",
                w[0]
            )));
        }
    }
    Ok(Mesh {
        xs,
        us,
        band,
        refine_factor,
    })
}
