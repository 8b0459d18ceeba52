//! Integration checks of the PDE solver: stability under grid refinement,
//! exact reduction to the single-regime problem when regime switching is
//! turned off, the vertical-floor refinement ladder, and the structural
//! guarantees of the policy iteration.

mod common;

use rds::benchmark::single_regime_threshold;
use rds::hjb::{
    build_mesh, epsilon_refinement_study, solve_dividend_problem, SolveError, SolverSettings,
};
use rds::model::ModelParams;

fn example_params(k: f64) -> ModelParams {
    ModelParams::two_state(2.0, 1.0, 1.0, 0.5, -0.25, 0.5, k, 0.5)
}

/// Zero generator: regimes never switch, so each drift-estimate column of
/// the PDE decouples into a single-regime problem.
fn frozen_params(k: f64) -> ModelParams {
    let mut p = example_params(k);
    p.q = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
    p.p = vec![1.0 - 1e-10, 1e-10];
    p.validate().unwrap();
    p
}

#[test]
fn refining_the_grid_stabilizes_the_solution() {
    let p = example_params(1.8);
    let probes: Vec<(f64, f64)> = vec![
        (0.5, 1.25),
        (1.0, 1.5),
        (2.0, 1.25),
        (2.0, 1.75),
        (5.0, 1.5),
    ];
    let mut values = Vec::new();
    for (n_x, n_u) in [(100, 20), (200, 40), (400, 80)] {
        let out = solve_dividend_problem(
            &p,
            &SolverSettings {
                n_x,
                n_u,
                ..SolverSettings::default()
            },
        )
        .unwrap();
        values.push(
            probes
                .iter()
                .map(|&(x, u)| out.value.interp(x, u))
                .collect::<Vec<f64>>(),
        );
    }
    let diff = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max)
    };
    let d01 = diff(&values[0], &values[1]);
    let d12 = diff(&values[1], &values[2]);
    assert!(
        d12 < d01,
        "refinement differences did not shrink: {d01} then {d12}"
    );
    assert!(d12 < 0.02, "fine-grid difference still large: {d12}");
}

#[test]
fn no_switching_reduces_to_the_single_regime_solution() {
    let p = frozen_params(1.8);
    let out = solve_dividend_problem(&p, &SolverSettings::default()).unwrap();
    let oracle = single_regime_threshold(2.0, 1.0, 0.5, 1.8).unwrap();

    // The top drift-estimate column solves the high-drift problem.
    let n_u = out.mesh.n_u();
    let b_top = out.threshold.b[n_u];
    let cell = out.mesh.x_cell(oracle.threshold);
    let spacing = out.mesh.xs[cell + 1] - out.mesh.xs[cell];
    assert!(
        (b_top - oracle.threshold).abs() <= 2.0 * spacing,
        "threshold {b_top} vs closed form {} (allow 2 x {spacing})",
        oracle.threshold
    );

    // Value slice along that column against the closed form.
    let mut worst: f64 = 0.0;
    for (i, &x) in out.mesh.xs.iter().enumerate() {
        let v = out.value.at(i, n_u);
        let exact = oracle.value(x);
        worst = worst.max((v - exact).abs() / exact.max(1.0));
    }
    assert!(worst <= 3e-2, "relative sup error {worst}");
}

#[test]
fn floor_refinement_ladder_is_strictly_decreasing() {
    // Uniform surplus grid whose spacing keeps the monotonicity repair at
    // the scale of the floor itself, so the ladder actually probes the
    // floor rather than the repair.
    let p = example_params(1.8);
    let mesh = build_mesh(&p, 10.0, 100, 40, (0.0, 0.0), 1.0).unwrap();
    let steps = epsilon_refinement_study(&p, &mesh, &[1e-2, 5e-3, 2.5e-3]).unwrap();
    assert_eq!(steps.len(), 2);
    assert!(
        steps[0].sup_diff > steps[1].sup_diff && steps[1].sup_diff > 0.0,
        "ladder differences not strictly decreasing: {} then {}",
        steps[0].sup_diff,
        steps[1].sup_diff
    );
}

#[test]
fn dropping_the_floor_entirely_loses_monotonicity() {
    let p = example_params(1.8);
    let mesh = build_mesh(&p, 10.0, 200, 40, (0.0, 1.9), 4.0).unwrap();
    let err = epsilon_refinement_study(&p, &mesh, &[1e-3, 0.0]).unwrap_err();
    assert!(
        matches!(err, SolveError::PositivityLoss { .. }),
        "expected a positivity failure, got: {err}"
    );
}

#[test]
fn policy_iteration_is_monotone_and_terminates_quickly() {
    let p = example_params(1.8);
    let out = solve_dividend_problem(&p, &SolverSettings::default()).unwrap();
    assert!(
        out.log.len() - 1 <= 10,
        "took {} sweeps",
        out.log.len() - 1
    );
    for rec in &out.log[1..] {
        assert!(
            rec.min_increment >= -1e-8,
            "sweep {} decreased the value by {}",
            rec.k,
            -rec.min_increment
        );
    }
    // The switching threshold falls as the drift estimate rises (the cap
    // is large enough that paying early is attractive when the estimate is
    // pessimistic).
    for w in out.threshold.b.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "threshold not non-increasing: {w:?}");
    }
    assert!(out.threshold.all_pure());
}

#[test]
fn solver_rejects_bad_settings() {
    let p = example_params(1.8);
    assert!(matches!(
        solve_dividend_problem(
            &p,
            &SolverSettings {
                n_x: 4,
                ..SolverSettings::default()
            }
        ),
        Err(SolveError::BadGrid(_))
    ));
    assert!(matches!(
        solve_dividend_problem(
            &p,
            &SolverSettings {
                eps: -1e-3,
                ..SolverSettings::default()
            }
        ),
        Err(SolveError::BadInput(_))
    ));
    assert!(matches!(
        solve_dividend_problem(
            &p,
            &SolverSettings {
                band: Some((5.0, 2.0)),
                ..SolverSettings::default()
            }
        ),
        Err(SolveError::BadGrid(_))
    ));
    assert!(matches!(
        solve_dividend_problem(
            &p,
            &SolverSettings {
                max_iter: 0,
                ..SolverSettings::default()
            }
        ),
        Err(SolveError::NonConvergence { .. })
    ));
}
