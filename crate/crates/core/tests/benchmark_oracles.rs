//! Cross-validation of the closed-form single-regime solutions against an
//! independent one-dimensional finite-difference solve, plus consistency
//! of the no-switching reduction path and the cap sweep.

mod common;

use common::solve_single_regime_fd;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rds::benchmark::{
    always_pay_value, bayesian_case, k_sweep, ruin_probability_never_pay,
    single_regime_threshold,
};
use rds::hjb::{
    build_mesh, default_zeta, epsilon_profile, solve_dividend_problem, SolverSettings,
    DEFAULT_EPS,
};
use rds::model::ModelParams;

fn example_params(k: f64) -> ModelParams {
    ModelParams::two_state(2.0, 1.0, 1.0, 0.5, -0.25, 0.5, k, 0.5)
}

#[test]
fn closed_form_matches_the_independent_fd_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(314159);
    for case in 0..5 {
        let mu = rng.gen_range(0.4..2.5);
        let sigma = rng.gen_range(0.6..1.8);
        let delta = rng.gen_range(0.2..0.9);
        let k = rng.gen_range(0.15..2.2);
        let sol = single_regime_threshold(mu, sigma, delta, k).unwrap();
        // Size the oracle domain from the decay length of the paying
        // branch so the far Dirichlet condition is harmless.
        let h_domain = (sol.threshold + (8.0 / sol.theta_minus.abs()).max(3.0)).min(60.0);
        let n = 4000;
        let oracle = solve_single_regime_fd(mu, sigma, delta, k, h_domain, n);
        let h = h_domain / n as f64;
        assert!(
            (oracle.threshold - sol.threshold).abs() <= 2.0 * h,
            "case {case} (mu={mu:.3} sigma={sigma:.3} delta={delta:.3} k={k:.3}): \
             fd threshold {} vs closed form {}",
            oracle.threshold,
            sol.threshold
        );
        let mut worst: f64 = 0.0;
        for (i, &x) in oracle.xs.iter().enumerate() {
            let exact = sol.value(x);
            let rel = (oracle.v[i] - exact).abs() / exact.max(1.0);
            worst = worst.max(rel);
        }
        assert!(
            worst <= 1e-2,
            "case {case}: relative sup error {worst} against the fd oracle"
        );
        // The always-pay strategy can never beat the optimum.
        for &x in &[0.25 * h_domain, 0.5 * h_domain] {
            let ap = always_pay_value(mu, sigma, delta, k, x);
            let cell = (x / h) as usize;
            assert!(
                ap <= oracle.v[cell.min(n)] + 1e-2,
                "case {case}: always-pay {ap} above the optimal value"
            );
        }
    }
}

#[test]
fn equation_residual_of_the_closed_form_vanishes() {
    let sol = single_regime_threshold(2.0, 1.0, 0.5, 1.8).unwrap();
    for &x in &[0.1, 0.4, sol.threshold + 0.3, 3.0, 8.0] {
        let r = sol.equation_residual(x);
        assert!(r.abs() < 1e-9, "residual {r} at x = {x}");
    }
}

#[test]
fn ruin_probability_is_a_probability_and_decays() {
    let mut prev = 1.0;
    for i in 0..10 {
        let x = i as f64 * 0.5;
        let p = ruin_probability_never_pay(2.0, 1.0, x);
        assert!((0.0..=1.0).contains(&p));
        assert!(p <= prev);
        prev = p;
    }
    let p1 = ruin_probability_never_pay(2.0, 1.0, 1.0);
    assert!((p1 - (-4.0f64).exp()).abs() < 1e-15);
}

#[test]
fn no_switching_solve_equals_the_dedicated_reduction() {
    // Solving a zero-generator model directly and solving the example model
    // through the no-switching reduction must produce identical numbers:
    // same mesh, same floor profile, same linear systems.
    let p = example_params(1.8);
    let mut frozen = p.clone();
    frozen.q = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
    frozen.validate().unwrap();

    let direct = solve_dividend_problem(&frozen, &SolverSettings::default()).unwrap();
    let profile = epsilon_profile(&p, DEFAULT_EPS, default_zeta(&p), &direct.mesh).unwrap();
    let reduced = bayesian_case(&p, &direct.mesh, &profile).unwrap();

    assert_eq!(direct.value.v.len(), reduced.value.v.len());
    for (a, b) in direct.value.v.iter().zip(&reduced.value.v) {
        assert_eq!(a.to_bits(), b.to_bits(), "value surfaces diverge");
    }
    for (a, b) in direct.threshold.b.iter().zip(&reduced.threshold.b) {
        assert_eq!(a.to_bits(), b.to_bits(), "thresholds diverge");
    }
}

#[test]
fn cap_sweep_validates_input_and_returns_aligned_curves() {
    let p = example_params(1.8);
    let mesh = build_mesh(&p, 10.0, 160, 24, (0.5, 1.5), 2.0).unwrap();
    let entries = k_sweep(&p, &mesh, &[2.0, 3.0]).unwrap();
    assert_eq!(entries.len(), 2);
    for e in &entries {
        assert_eq!(e.threshold.us.len(), mesh.n_u() + 1);
        assert!(e.threshold.b.iter().all(|&b| b >= 0.0));
    }
    assert!(k_sweep(&p, &mesh, &[3.0, 2.0]).is_err(), "unsorted caps");
    assert!(k_sweep(&p, &mesh, &[0.0, 2.0]).is_err(), "nonpositive cap");
    assert!(k_sweep(&p, &mesh, &[2.0]).unwrap().len() == 1);
}
