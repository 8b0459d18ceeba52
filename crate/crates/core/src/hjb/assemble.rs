//! Monotone finite-difference assembly of the stationary dividend operator.
//!
//! In the transformed plane `(x, upsilon)` — surplus against conditional
//! drift estimate — the value function of the two-state problem solves, for
//! a fixed bang-bang payout policy `u`,
//!
//! ```text
//! a_x V_xx + (upsilon - u) V_x + b(upsilon) V_u + c(upsilon) V_xu
//!   + a_u(upsilon) V_uu - delta V + u = 0
//! ```
//!
//! with `a_x = sigma^2/2`, cross coefficient `c = (mu1 - upsilon)(upsilon - mu2)`,
//! drift `b = q21 (mu1 - upsilon) + q11 (upsilon - mu2)` and degenerate
//! vertical diffusion `a_u = c^2 / (2 sigma^2)`, plus an artificial floor
//! `eps_bar(upsilon)` that vanishes at the drift boundaries. Boundary data:
//! `V(0, .) = 0` (ruin) and `V(H, .) = K/delta` (the saturation value).
//!
//! The discretization is built to be *monotone*: second differences for the
//! diffusion terms, upwind first differences for both drifts, and the cross
//! term in its two-corner form which, for `c >= 0`, touches only the
//! `(i+1, j+1)` and `(i-1, j-1)` corners:
//!
//! ```text
//! V_xu ~ [ (V(i+1,j+1) - V(i+1,j) - V(i,j+1) + V(i,j)) / (h+ k+)
//!        + (V(i-1,j-1) - V(i-1,j) - V(i,j-1) + V(i,j)) / (h- k-) ] / 2
//! ```
//!
//! The cross term subtracts from the four axis neighbours, which is where
//! monotonicity can fail. Vertically the floor is raised node-by-node just
//! enough to restore a nonnegative coefficient (the degeneracy
//! `a_x a_u = c^2/4` leaves no slack of its own); horizontally nothing can
//! be raised without changing the equation, so a horizontal shortfall is
//! reported as a violation and the solve refuses to continue. Raises and
//! violations are both recorded in the [`AssemblyReport`].
//!
//! Rows are written in the `delta*I - L` orientation: positive diagonal,
//! nonpositive off-diagonals, interior row sums exactly `delta`. With the
//! Dirichlet rows appended the matrix is strictly diagonally dominant, which
//! the banded LU exploits.

use super::banded::Banded;
use super::grid::PolicyGrid;
use super::mesh::Mesh;
use super::SolveError;
use crate::model::ModelParams;

/// Vertical viscosity floor sampled at the drift-estimate nodes.
///
/// The ramp rises from exactly zero at the drift boundaries to the base
/// level over a width `zeta`, following the C1 smoothstep `t^2 (3 - 2t)`;
/// inside the plateau the floor is exactly `eps`.
#[derive(Debug, Clone)]
pub struct EpsilonProfile {
    /// Base level of the floor (plateau value).
    pub eps: f64,
    /// Ramp width on each side of the drift interval.
    pub zeta: f64,
    /// Per-node floor values aligned with `mesh.us`.
    pub values: Vec<f64>,
}

impl EpsilonProfile {
    /// The all-zero profile (no artificial vertical diffusion). Assembly
    /// performs no positivity repairs under this profile, so violations are
    /// reported instead of fixed — which is exactly how a vanishing-
    /// viscosity study detects that the unregularized problem degenerates.
    pub fn zero(mesh: &Mesh) -> Self {
        EpsilonProfile {
            eps: 0.0,
            zeta: 0.0,
            values: vec![0.0; mesh.us.len()],
        }
    }
}

/// Builds the ramped floor for a mesh.
///
/// `eps` must be nonnegative and `zeta` must satisfy
/// `0 < zeta < (mu1 - mu2)/2` so the two ramps do not overlap.
pub fn epsilon_profile(
    params: &ModelParams,
    eps: f64,
    zeta: f64,
    mesh: &Mesh,
) -> Result<EpsilonProfile, SolveError> {
    params.validate()?;
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(SolveError::BadInput(format!(
            "eps = {eps} must be a nonnegative number"
        )));
    }
    let gap = params.mu_top() - params.mu_bottom();
    if !(zeta > 0.0) || !(zeta < 0.5 * gap) {
        return Err(SolveError::BadInput(format!(
            "zeta = {zeta} must lie in (0, {})",
            0.5 * gap
        )));
    }
    let mu1 = params.mu_top();
    let mu2 = params.mu_bottom();
    let values = mesh
        .us
        .iter()
        .map(|&u| {
            let d = (u - mu2).min(mu1 - u).max(0.0);
            let t = (d / zeta).min(1.0);
            eps * t * t * (3.0 - 2.0 * t)
        })
        .collect();
    Ok(EpsilonProfile { eps, zeta, values })
}

/// One nonpositive off-diagonal that could not be repaired.
#[derive(Debug, Clone)]
pub struct PositivityViolation {
    /// Node whose row breaks monotonicity.
    pub node: (usize, usize),
    /// Neighbour whose stencil weight went negative.
    pub neighbor: (usize, usize),
    /// The offending coefficient (operator orientation; should be >= 0).
    pub coefficient: f64,
}

/// What assembly did to keep the stencil monotone.
#[derive(Debug, Clone, Default)]
pub struct AssemblyReport {
    /// Nodes whose vertical floor was raised above the profile value.
    pub raised_nodes: usize,
    /// Largest raise applied to the vertical diffusion coefficient.
    pub max_raise: f64,
    /// Negative stencil weights that could not be repaired.
    pub violations: Vec<PositivityViolation>,
}

/// The discretized operator for one fixed policy, ready to solve.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub mesh: Mesh,
    /// `delta*I - L` with Dirichlet identity rows at `x = 0` and `x = H`.
    pub matrix: Banded,
    /// Payout source at interior rows, boundary data at Dirichlet rows.
    pub rhs: Vec<f64>,
    pub report: AssemblyReport,
}

/// Relative dust threshold below which a slightly negative stencil weight is
/// treated as exact zero (rounding from the two-corner cancellation).
const COEF_DUST: f64 = 1e-13;

/// Cleans rounding dust off a stencil weight and records a violation if the
/// weight is genuinely negative. Returns the weight to use.
fn clean_weight(
    w: f64,
    scale: f64,
    node: (usize, usize),
    neighbor: (usize, usize),
    report: &mut AssemblyReport,
) -> f64 {
    if w < 0.0 {
        if w >= -COEF_DUST * scale {
            0.0
        } else {
            report.violations.push(PositivityViolation {
                node,
                neighbor,
                coefficient: w,
            });
            w
        }
    } else {
        w
    }
}

/// Discretizes the operator for a fixed policy.
///
/// The policy must live on the same mesh and prescribe rate `0` or `K` at
/// every node. Two-state models only.
pub fn assemble_system(
    params: &ModelParams,
    mesh: &Mesh,
    eps_profile: &EpsilonProfile,
    policy: &PolicyGrid,
) -> Result<AssembledSystem, SolveError> {
    params.validate()?;
    params.require_two_state("M")?;
    let n_x = mesh.n_x();
    let n_u = mesh.n_u();
    if policy.rates.len() != mesh.n_nodes() {
        return Err(SolveError::BadInput(format!(
            "policy has {} nodes, mesh has {}",
            policy.rates.len(),
            mesh.n_nodes()
        )));
    }
    if eps_profile.values.len() != n_u + 1 {
        return Err(SolveError::BadInput(format!(
            "epsilon profile has {} nodes, mesh has {}",
            eps_profile.values.len(),
            n_u + 1
        )));
    }
    if eps_profile.values[0] != 0.0 || eps_profile.values[n_u] != 0.0 {
        return Err(SolveError::BadInput(
            "epsilon profile must vanish at the drift boundaries".into(),
        ));
    }
    for (k, &r) in policy.rates.iter().enumerate() {
        if r != 0.0 && r != params.k {
            return Err(SolveError::BadInput(format!(
                "policy rate {r} at flat node {k} is neither 0 nor K = {}",
                params.k
            )));
        }
    }

    let mu1 = params.mu_top();
    let mu2 = params.mu_bottom();
    let (q11, q21) = (params.q[0][0], params.q[1][0]);
    let sigma2 = params.sigma * params.sigma;
    let a_x = 0.5 * sigma2;
    let delta = params.delta;
    let repairs_enabled = eps_profile.eps > 0.0;

    let n = mesh.n_nodes();
    let bw = n_u + 2;
    let mut matrix = Banded::new(n, bw);
    let mut rhs = vec![0.0; n];
    let mut report = AssemblyReport::default();
    // (neighbour i, neighbour j, weight, magnitude scale for dust cleanup)
    let mut offs: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(6);

    for i in 0..=n_x {
        for j in 0..=n_u {
            let row = mesh.idx(i, j);
            // Dirichlet rows: ruin value at x = 0, saturation value at x = H.
            if i == 0 || i == n_x {
                matrix.set(row, row, 1.0);
                rhs[row] = if i == 0 { 0.0 } else { params.payout_bound() };
                continue;
            }

            let ups = mesh.us[j];
            let u_rate = policy.at(i, j);
            let h_m = mesh.xs[i] - mesh.xs[i - 1];
            let h_p = mesh.xs[i + 1] - mesh.xs[i];
            let beta_x = ups - u_rate;
            let beta_u = q21 * (mu1 - ups) + q11 * (ups - mu2);
            let bx_p = beta_x.max(0.0);
            let bx_m = (-beta_x).max(0.0);
            let bu_p = beta_u.max(0.0);
            let bu_m = (-beta_u).max(0.0);

            offs.clear();

            if j == 0 || j == n_u {
                // Drift boundary: the cross and vertical-diffusion
                // coefficients vanish there exactly, and the vertical drift
                // points inward for any valid generator, so a one-sided
                // difference keeps the row monotone without ghost nodes.
                let sx = a_x / (h_m * h_p) + bx_p / h_p + bx_m / h_m;
                offs.push((i + 1, j, 2.0 * a_x / (h_p * (h_m + h_p)) + bx_p / h_p, sx));
                offs.push((i - 1, j, 2.0 * a_x / (h_m * (h_m + h_p)) + bx_m / h_m, sx));
                if j == 0 {
                    let k_p = mesh.us[j + 1] - mesh.us[j];
                    offs.push((i, j + 1, bu_p / k_p, bu_p / k_p + 1.0));
                    if bu_m > 0.0 {
                        // Outward drift at the boundary cannot be upwinded
                        // inside the domain; flag it instead of discretizing.
                        report.violations.push(PositivityViolation {
                            node: (i, j),
                            neighbor: (i, j),
                            coefficient: -bu_m,
                        });
                    }
                } else {
                    let k_m = mesh.us[j] - mesh.us[j - 1];
                    offs.push((i, j - 1, bu_m / k_m, bu_m / k_m + 1.0));
                    if bu_p > 0.0 {
                        report.violations.push(PositivityViolation {
                            node: (i, j),
                            neighbor: (i, j),
                            coefficient: -bu_p,
                        });
                    }
                }
            } else {
                let k_m = mesh.us[j] - mesh.us[j - 1];
                let k_p = mesh.us[j + 1] - mesh.us[j];
                let c = (mu1 - ups) * (ups - mu2);
                let a_u_base = c * c / (2.0 * sigma2) + eps_profile.values[j];

                // Vertical monotonicity: the (i, j+1) weight needs
                //   2 a_u / (k+ (k- + k+)) + [b]+ / k+ >= c / (2 h+ k+),
                // and symmetrically at (i, j-1). Raising a_u to the exact
                // bound lands the weight at zero, the smallest repair that
                // keeps the scheme monotone.
                let req_fwd = 0.5 * (k_m + k_p) * (c / (2.0 * h_p) - bu_p);
                let req_bwd = 0.5 * (k_m + k_p) * (c / (2.0 * h_m) - bu_m);
                let req = req_fwd.max(req_bwd).max(0.0);
                let a_u = if repairs_enabled && a_u_base < req {
                    report.raised_nodes += 1;
                    report.max_raise = report.max_raise.max(req - a_u_base);
                    req
                } else {
                    a_u_base
                };

                let cross_p = c / (2.0 * h_p * k_p);
                let cross_m = c / (2.0 * h_m * k_m);

                let wx_p = 2.0 * a_x / (h_p * (h_m + h_p)) + bx_p / h_p;
                offs.push((i + 1, j, wx_p - cross_p, wx_p + cross_p));
                let wx_m = 2.0 * a_x / (h_m * (h_m + h_p)) + bx_m / h_m;
                offs.push((i - 1, j, wx_m - cross_m, wx_m + cross_m));
                let wu_p = 2.0 * a_u / (k_p * (k_m + k_p)) + bu_p / k_p;
                offs.push((i, j + 1, wu_p - cross_p, wu_p + cross_p));
                let wu_m = 2.0 * a_u / (k_m * (k_m + k_p)) + bu_m / k_m;
                offs.push((i, j - 1, wu_m - cross_m, wu_m + cross_m));
                offs.push((i + 1, j + 1, cross_p, cross_p));
                offs.push((i - 1, j - 1, cross_m, cross_m));
            }

            let mut off_sum = 0.0;
            for &(ni, nj, w, scale) in &offs {
                let w = clean_weight(w, scale, (i, j), (ni, nj), &mut report);
                if w != 0.0 {
                    matrix.add(row, mesh.idx(ni, nj), -w);
                    off_sum += w;
                }
            }
            // Row sum is exactly delta: the operator annihilates constants.
            matrix.set(row, row, delta + off_sum);
            rhs[row] = u_rate;
        }
    }

    Ok(AssembledSystem {
        mesh: mesh.clone(),
        matrix,
        rhs,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::mesh::build_mesh;

    fn demo() -> ModelParams {
        ModelParams::two_state(2.0, 1.0, 1.0, 0.5, -0.25, 0.5, 1.8, 0.5)
    }

    fn demo_mesh() -> Mesh {
        build_mesh(&demo(), 10.0, 64, 16, (0.0, 2.0), 2.0).unwrap()
    }

    #[test]
    fn profile_vanishes_at_boundaries_and_plateaus_inside() {
        let p = demo();
        let mesh = demo_mesh();
        let prof = epsilon_profile(&p, 1e-3, 0.1, &mesh).unwrap();
        assert_eq!(prof.values[0], 0.0);
        assert_eq!(*prof.values.last().unwrap(), 0.0);
        let mid = prof.values[mesh.n_u() / 2];
        assert_eq!(mid, 1e-3);
        assert!(prof.values.iter().all(|&v| (0.0..=1e-3).contains(&v)));
        // Ramp is monotone on the way up.
        let ramp_nodes = (0.1 / mesh.du()).ceil() as usize;
        for j in 0..ramp_nodes {
            assert!(prof.values[j + 1] >= prof.values[j]);
        }
    }

    #[test]
    fn profile_rejects_bad_inputs() {
        let p = demo();
        let mesh = demo_mesh();
        assert!(epsilon_profile(&p, -1.0, 0.1, &mesh).is_err());
        assert!(epsilon_profile(&p, 1e-3, 0.0, &mesh).is_err());
        assert!(epsilon_profile(&p, 1e-3, 0.5, &mesh).is_err());
    }

    #[test]
    fn interior_rows_sum_to_delta_and_offdiagonals_are_nonpositive() {
        let p = demo();
        let mesh = demo_mesh();
        let prof = epsilon_profile(&p, 1e-3, 0.1, &mesh).unwrap();
        let policy = PolicyGrid::constant(&mesh, p.k);
        let sys = assemble_system(&p, &mesh, &prof, &policy).unwrap();
        assert!(sys.report.violations.is_empty());
        for i in 1..mesh.n_x() {
            for j in 0..=mesh.n_u() {
                let row = mesh.idx(i, j);
                let mut sum = 0.0;
                let mut diag = 0.0;
                sys.matrix.for_row(row, |col, v| {
                    sum += v;
                    if col == row {
                        diag = v;
                    } else {
                        assert!(v <= 0.0, "off-diagonal {v} at row {row}, col {col}");
                    }
                });
                assert!(diag > 0.0);
                assert!((sum - p.delta).abs() <= 1e-10, "row {row} sums to {sum}");
                assert_eq!(sys.rhs[row], p.k);
            }
        }
    }

    #[test]
    fn constant_field_action_is_delta_times_constant() {
        let p = demo();
        let mesh = demo_mesh();
        let prof = epsilon_profile(&p, 1e-3, 0.1, &mesh).unwrap();
        let policy = PolicyGrid::constant(&mesh, 0.0);
        let sys = assemble_system(&p, &mesh, &prof, &policy).unwrap();
        let c = 1.7;
        let v = vec![c; mesh.n_nodes()];
        let mut av = vec![0.0; mesh.n_nodes()];
        sys.matrix.matvec(&v, &mut av);
        for i in 1..mesh.n_x() {
            for j in 0..=mesh.n_u() {
                let r = mesh.idx(i, j);
                assert!(
                    (av[r] - p.delta * c).abs() <= 1e-10,
                    "row {r}: {} vs {}",
                    av[r],
                    p.delta * c
                );
            }
        }
        // Dirichlet rows reproduce the constant itself.
        assert!((av[mesh.idx(0, 3)] - c).abs() <= 1e-14);
    }

    #[test]
    fn boundary_rows_are_identity_with_boundary_data() {
        let p = demo();
        let mesh = demo_mesh();
        let prof = epsilon_profile(&p, 1e-3, 0.1, &mesh).unwrap();
        let policy = PolicyGrid::constant(&mesh, 0.0);
        let sys = assemble_system(&p, &mesh, &prof, &policy).unwrap();
        for j in 0..=mesh.n_u() {
            let r0 = mesh.idx(0, j);
            let rh = mesh.idx(mesh.n_x(), j);
            assert_eq!(sys.rhs[r0], 0.0);
            assert!((sys.rhs[rh] - p.payout_bound()).abs() <= 1e-15);
            sys.matrix.for_row(r0, |col, v| {
                if col == r0 {
                    assert_eq!(v, 1.0);
                } else {
                    assert_eq!(v, 0.0);
                }
            });
            sys.matrix.for_row(rh, |col, v| {
                if col == rh {
                    assert_eq!(v, 1.0);
                } else {
                    assert_eq!(v, 0.0);
                }
            });
        }
    }

    #[test]
    fn zero_profile_reports_violations_instead_of_repairing() {
        let p = demo();
        let mesh = build_mesh(&p, 10.0, 64, 16, (0.0, 2.0), 2.0).unwrap();
        let prof = EpsilonProfile::zero(&mesh);
        let policy = PolicyGrid::constant(&mesh, 0.0);
        let sys = assemble_system(&p, &mesh, &prof, &policy).unwrap();
        assert_eq!(sys.report.raised_nodes, 0);
        assert!(
            !sys.report.violations.is_empty(),
            "the degenerate vertical diffusion cannot be monotone on this mesh without a floor"
        );
    }

    #[test]
    fn raises_are_recorded_and_bounded() {
        let p = demo();
        let mesh = demo_mesh();
        let prof = epsilon_profile(&p, 1e-3, 0.1, &mesh).unwrap();
        let policy = PolicyGrid::constant(&mesh, 0.0);
        let sys = assemble_system(&p, &mesh, &prof, &policy).unwrap();
        assert!(sys.report.violations.is_empty());
        // Some nodes need the floor on this deliberately coarse mesh, but
        // the repair stays modest (bounded by c k / (2 h) at the binding side).
        assert!(sys.report.raised_nodes > 0);
        let bound = 0.25 * mesh.du() / (2.0 * mesh.min_dx()) + 1e-9;
        assert!(
            sys.report.max_raise <= bound,
            "raise {} exceeds bound {}",
            sys.report.max_raise,
            bound
        );
    }

    #[test]
    fn mismatched_policy_is_rejected() {
        let p = demo();
        let mesh = demo_mesh();
        let prof = epsilon_profile(&p, 1e-3, 0.1, &mesh).unwrap();
        let mut policy = PolicyGrid::constant(&mesh, 0.0);
        policy.rates[5] = 0.7; // neither 0 nor K
        assert!(assemble_system(&p, &mesh, &prof, &policy).is_err());
    }
}
