mod common;

use common::load;
use impulse_volterra::analysis::Analysis;
use impulse_volterra::gradient::costate_p;
use impulse_volterra::ode::{
    ode_grad_tau, ode_stationarity, psi_costate, psi_residual, rho_matrix,
};
use impulse_volterra::optimize::{optimize, OptimizeOptions};
use impulse_volterra::oracle::{grid_search, GridSpec};
use impulse_volterra::{build_mesh, SolveOptions};

fn options(points_per_interval: usize) -> OptimizeOptions {
    OptimizeOptions {
        points_per_interval,
        ..OptimizeOptions::default()
    }
}

#[test]
fn full_problem_descends_to_a_stationary_point() {
    let b = load("P-FULL");
    let trace = optimize(b.problem.as_ref(), &b.schedule, &b.controls, &options(50)).unwrap();
    assert!(trace.converged, "{:?}", trace.final_record());
    assert!(trace.is_monotone());
    for pair in trace.records.windows(2) {
        assert!(pair[1].cost < pair[0].cost);
    }
    let last = trace.final_record();
    assert!(last.tau_residual < 1e-4 && last.vi_residual < 1e-4);

    let delta = b.schedule.min_gap();
    for r in &trace.records {
        assert!(r.tau.iter().all(|&t| t >= delta && t <= 1.0 - delta));
        assert!(r.tau.windows(2).all(|w| w[1] - w[0] >= delta));
        assert!(r.levels.iter().all(|&a| (0.0..=1.0).contains(&a)));
    }
}

#[test]
fn full_problem_optimum_matches_the_grid_oracle() {
    let b = load("P-FULL");
    let m = 50;
    let trace = optimize(b.problem.as_ref(), &b.schedule, &b.controls, &options(m)).unwrap();
    let delta = b.schedule.min_gap();
    let grid = GridSpec {
        tau_axes: vec![GridSpec::linspace(delta, 1.0 - delta, 50)],
        level_axes: vec![
            GridSpec::linspace(0.0, 1.0, 21),
            GridSpec::linspace(0.0, 1.0, 21),
        ],
    };
    let found = grid_search(
        b.problem.as_ref(),
        1.0,
        delta,
        &grid,
        m,
        &SolveOptions::default(),
    )
    .unwrap();
    let gap = (trace.final_record().cost - found.best_cost).abs();
    assert!(
        gap <= found.neighbor_variation,
        "gap {gap:e} > cell {:e}",
        found.neighbor_variation
    );
}

#[test]
fn oscillator_optimum_satisfies_the_ode_conditions() {
    let b = load("P-ODE");
    let m = 100;
    let trace = optimize(b.problem.as_ref(), &b.schedule, &b.controls, &options(m)).unwrap();
    assert!(trace.converged, "{:?}", trace.final_record());
    assert!(trace.is_monotone());

    let ode = b.ode.as_ref().unwrap().as_ref();
    let at = |points: usize| {
        let mesh = build_mesh(&trace.schedule, points).unwrap();
        Analysis::new(
            b.problem.as_ref(),
            &trace.schedule,
            &trace.controls,
            mesh,
            &SolveOptions::default(),
        )
        .unwrap()
    };
    let a = at(m);
    let psi = psi_costate(&a, costate_p(&a));
    let rhos: Vec<_> = (2..=a.impulse_count() + 1)
        .map(|l| rho_matrix(&a, l))
        .collect();
    let grad = ode_grad_tau(ode, &a, &psi, &rhos);
    assert!(ode_stationarity(&grad) < 1e-4, "{grad:?}");

    // the backward equation is met to the trapezoid error, O(Δ²)
    let fine = at(400);
    let psi = psi_costate(&fine, costate_p(&fine));
    assert!(psi_residual(ode, &fine, &psi) < 1e-6);
}
