//! Threshold curves: extraction from bang-bang policies, seeding, and the
//! vanishing-viscosity refinement study.
//!
//! The optimal policy is expected to be of threshold type in the surplus
//! direction: for each drift estimate there is a level `b(upsilon)` above
//! which paying at the cap is optimal. [`extract_threshold`] reads that
//! boundary off a policy grid and records whether each column really is a
//! clean 0...0 K...K pattern.

use super::assemble::{epsilon_profile, EpsilonProfile};
use super::grid::PolicyGrid;
use super::mesh::Mesh;
use super::SolveError;
use crate::model::ModelParams;

/// Payout boundary indexed by the drift-estimate nodes.
///
/// `b[j]` is the smallest surplus at which the policy pays at `us[j]`;
/// `f64::INFINITY` marks columns that never pay.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCurve {
    pub us: Vec<f64>,
    pub b: Vec<f64>,
    /// Whether column `j` is a pure threshold column (no payout hole).
    pub pure_threshold: Vec<bool>,
}

impl ThresholdCurve {
    /// Builds a curve from raw nodes; lengths must agree.
    pub fn new(us: Vec<f64>, b: Vec<f64>) -> Result<Self, SolveError> {
        if us.len() != b.len() || us.len() < 2 {
            return Err(SolveError::BadInput(format!(
                "threshold curve needs matching node lists (got {} and {})",
                us.len(),
                b.len()
            )));
        }
        for w in us.windows(2) {
            if !(w[1] > w[0]) {
                return Err(SolveError::BadInput(
                    "threshold curve nodes must be strictly increasing".into(),
                ));
            }
        }
        if b.iter().any(|&x| x.is_nan() || x < 0.0) {
            return Err(SolveError::BadInput(
                "threshold values must be nonnegative (infinity = never pay)".into(),
            ));
        }
        let pure = vec![true; us.len()];
        Ok(ThresholdCurve {
            us,
            b,
            pure_threshold: pure,
        })
    }

    /// True when every column is a clean 0...0 K...K pattern.
    pub fn all_pure(&self) -> bool {
        self.pure_threshold.iter().all(|&p| p)
    }

    /// Threshold at an arbitrary drift estimate: linear interpolation with
    /// the estimate clamped to the curve's range. A cell with an infinite
    /// endpoint interpolates to infinity (never pay there).
    pub fn b_at(&self, nu: f64) -> f64 {
        let n = self.us.len();
        let x = nu.clamp(self.us[0], self.us[n - 1]);
        // Binary search for the cell.
        let mut lo = 0usize;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.us[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (b0, b1) = (self.b[lo], self.b[lo + 1]);
        if !b0.is_finite() || !b1.is_finite() {
            return f64::INFINITY;
        }
        let t = (x - self.us[lo]) / (self.us[lo + 1] - self.us[lo]);
        b0 + t * (b1 - b0)
    }

    /// The curve shifted by `dx` in surplus (clamped at zero); used to build
    /// deliberately suboptimal comparison strategies.
    pub fn shifted(&self, dx: f64) -> ThresholdCurve {
        ThresholdCurve {
            us: self.us.clone(),
            b: self.b.iter().map(|&b| (b + dx).max(0.0)).collect(),
            pure_threshold: self.pure_threshold.clone(),
        }
    }

    /// Sup-norm distance between two curves on identical nodes; infinite
    /// entries match each other at distance zero.
    pub fn sup_diff(&self, other: &ThresholdCurve) -> f64 {
        assert_eq!(self.us.len(), other.us.len());
        self.b
            .iter()
            .zip(&other.b)
            .map(|(&a, &b)| {
                if a.is_infinite() && b.is_infinite() {
                    0.0
                } else {
                    (a - b).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Reads the payout boundary off a policy grid, column by column.
pub fn extract_threshold(policy: &PolicyGrid) -> ThresholdCurve {
    let mesh = &policy.mesh;
    let n_x = mesh.n_x();
    let n_u = mesh.n_u();
    let mut b = Vec::with_capacity(n_u + 1);
    let mut pure = Vec::with_capacity(n_u + 1);
    for j in 0..=n_u {
        let mut first_pay: Option<usize> = None;
        let mut is_pure = true;
        for i in 0..=n_x {
            let pays = policy.at(i, j) > 0.0;
            match (first_pay, pays) {
                (None, true) => first_pay = Some(i),
                (Some(_), false) => is_pure = false,
                _ => {}
            }
        }
        b.push(match first_pay {
            Some(i) => mesh.xs[i],
            None => f64::INFINITY,
        });
        pure.push(is_pure);
    }
    ThresholdCurve {
        us: mesh.us.clone(),
        b,
        pure_threshold: pure,
    }
}

/// Affine seed curve between the two single-regime thresholds: the curve
/// takes value `b2_bar` at the low-drift edge and `b1_bar` at the high-drift
/// edge of the estimate axis.
pub fn initial_threshold(
    params: &ModelParams,
    mesh: &Mesh,
    b1_bar: f64,
    b2_bar: f64,
) -> Result<ThresholdCurve, SolveError> {
    params.validate()?;
    params.require_two_state("M")?;
    if !(b1_bar >= 0.0) || !b1_bar.is_finite() || !(b2_bar >= 0.0) || !b2_bar.is_finite() {
        return Err(SolveError::BadInput(format!(
            "seed thresholds must be finite and nonnegative (got {b1_bar}, {b2_bar})"
        )));
    }
    let mu1 = params.mu_top();
    let mu2 = params.mu_bottom();
    let b = mesh
        .us
        .iter()
        .map(|&u| {
            let t = (u - mu2) / (mu1 - mu2);
            b2_bar + t * (b1_bar - b2_bar)
        })
        .collect();
    ThresholdCurve::new(mesh.us.clone(), b)
}

/// Bang-bang policy induced by a threshold curve: pay at the cap at nodes on
/// or above the (interpolated) boundary.
pub fn policy_from_threshold(
    params: &ModelParams,
    mesh: &Mesh,
    curve: &ThresholdCurve,
) -> Result<PolicyGrid, SolveError> {
    params.validate()?;
    let mut rates = vec![0.0; mesh.n_nodes()];
    for (j, &u) in mesh.us.iter().enumerate() {
        let b = curve.b_at(u);
        for (i, &x) in mesh.xs.iter().enumerate() {
            if x >= b {
                rates[mesh.idx(i, j)] = params.k;
            }
        }
    }
    Ok(PolicyGrid {
        mesh: mesh.clone(),
        rates,
    })
}

/// One rung of the vanishing-viscosity ladder.
#[derive(Debug, Clone)]
pub struct RefinementStep {
    /// The coarser (larger) floor level.
    pub eps_from: f64,
    /// The finer (smaller) floor level.
    pub eps_to: f64,
    /// `sup |V_eps_from - V_eps_to|` over the mesh.
    pub sup_diff: f64,
}

/// Solves the problem along a decreasing ladder of floor levels and returns
/// the sup-norm gaps between consecutive solutions.
///
/// The ladder must be strictly decreasing and nonnegative. A zero entry is
/// attempted with no repairs enabled; if the unregularized scheme loses
/// monotonicity anywhere, the solve — and hence the study — fails, which is
/// the expected outcome for a genuinely degenerate problem.
pub fn epsilon_refinement_study(
    params: &ModelParams,
    mesh: &Mesh,
    eps_sequence: &[f64],
) -> Result<Vec<RefinementStep>, SolveError> {
    params.validate()?;
    if eps_sequence.len() < 2 {
        return Err(SolveError::BadInput(
            "refinement study needs at least two floor levels".into(),
        ));
    }
    for w in eps_sequence.windows(2) {
        if !(w[1] < w[0]) {
            return Err(SolveError::BadInput(format!(
                "floor levels must be strictly decreasing, found {} -> {}",
                w[0], w[1]
            )));
        }
    }
    if eps_sequence.iter().any(|&e| e < 0.0 || !e.is_finite()) {
        return Err(SolveError::BadInput(
            "floor levels must be nonnegative".into(),
        ));
    }

    let zeta = super::default_zeta(params);
    let mut prev: Option<(f64, crate::hjb::grid::ValueGrid)> = None;
    let mut steps = Vec::new();
    for &eps in eps_sequence {
        let profile = if eps > 0.0 {
            epsilon_profile(params, eps, zeta, mesh)?
        } else {
            EpsilonProfile::zero(mesh)
        };
        let out = super::run_on_mesh(params, mesh, &profile, super::DEFAULT_MAX_ITER, super::DEFAULT_VALUE_TOL)?;
        if let Some((eps_prev, v_prev)) = &prev {
            steps.push(RefinementStep {
                eps_from: *eps_prev,
                eps_to: eps,
                sup_diff: v_prev.sup_diff(&out.value),
            });
        }
        prev = Some((eps, out.value));
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::mesh::build_mesh;

    fn demo() -> ModelParams {
        ModelParams::two_state(2.0, 1.0, 1.0, 0.5, -0.25, 0.5, 1.8, 0.5)
    }

    fn tiny_mesh() -> Mesh {
        Mesh {
            xs: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            us: vec![1.0, 1.5, 2.0],
            band: (0.0, 0.0),
            refine_factor: 1.0,
        }
    }

    #[test]
    fn always_pay_column_has_zero_threshold() {
        let p = demo();
        let mesh = tiny_mesh();
        let pol = PolicyGrid::constant(&mesh, p.k);
        let curve = extract_threshold(&pol);
        assert!(curve.b.iter().all(|&b| b == 0.0));
        assert!(curve.all_pure());
    }

    #[test]
    fn never_pay_column_has_infinite_threshold() {
        let mesh = tiny_mesh();
        let pol = PolicyGrid::constant(&mesh, 0.0);
        let curve = extract_threshold(&pol);
        assert!(curve.b.iter().all(|&b| b.is_infinite()));
        assert!(curve.all_pure());
    }

    #[test]
    fn mixed_column_reports_its_first_payout_node() {
        let p = demo();
        let mesh = tiny_mesh();
        let mut pol = PolicyGrid::constant(&mesh, 0.0);
        // Column j=1: pattern (0, 0, K, K, K) over xs = 0..4.
        for i in 2..=4 {
            pol.rates[mesh.idx(i, 1)] = p.k;
        }
        let curve = extract_threshold(&pol);
        assert_eq!(curve.b[1], 2.0);
        assert!(curve.pure_threshold[1]);
        // Column with a hole: (0, K, 0, K, K) is not pure.
        let mut holed = PolicyGrid::constant(&mesh, 0.0);
        for &i in &[1usize, 3, 4] {
            holed.rates[mesh.idx(i, 2)] = p.k;
        }
        let curve2 = extract_threshold(&holed);
        assert_eq!(curve2.b[2], 1.0);
        assert!(!curve2.pure_threshold[2]);
        assert!(!curve2.all_pure());
    }

    #[test]
    fn seed_curve_interpolates_the_single_regime_levels() {
        let p = demo();
        let mesh = build_mesh(&p, 10.0, 32, 8, (0.0, 2.0), 1.0).unwrap();
        let curve = initial_threshold(&p, &mesh, 0.81, 0.9).unwrap();
        assert!((curve.b[0] - 0.9).abs() <= 1e-14);
        assert!((curve.b[8] - 0.81).abs() <= 1e-14);
        let mid = curve.b_at(1.5);
        assert!((mid - 0.855).abs() <= 1e-12);
        assert!(initial_threshold(&p, &mesh, -0.1, 0.9).is_err());
    }

    #[test]
    fn interpolation_clamps_and_propagates_infinity() {
        let curve = ThresholdCurve {
            us: vec![1.0, 1.5, 2.0],
            b: vec![1.0, 2.0, f64::INFINITY],
            pure_threshold: vec![true, true, true],
        };
        assert!((curve.b_at(1.25) - 1.5).abs() <= 1e-14);
        assert_eq!(curve.b_at(0.5), 1.0); // clamped to the low edge
        assert!(curve.b_at(1.75).is_infinite());
        assert!(curve.b_at(3.0).is_infinite());
    }

    #[test]
    fn threshold_policy_round_trip() {
        let p = demo();
        let mesh = build_mesh(&p, 10.0, 32, 8, (0.0, 2.0), 1.0).unwrap();
        let curve = initial_threshold(&p, &mesh, 0.8, 1.2).unwrap();
        let pol = policy_from_threshold(&p, &mesh, &curve).unwrap();
        let back = extract_threshold(&pol);
        for j in 0..=mesh.n_u() {
            // Extraction snaps to the next grid node at or above the curve.
            let want = curve.b[j];
            let got = back.b[j];
            assert!(got >= want - 1e-12, "column {j}");
            assert!(got - want <= mesh.max_dx() + 1e-12, "column {j}");
            assert!(back.pure_threshold[j]);
        }
    }
}
