//! Analytic gradients against central differences of full nonlinear re-solves.

#![allow(clippy::needless_range_loop)]

mod common;

use common::{analysis, load, relative};
use impulse_volterra::gradient::gradient_report;
use impulse_volterra::oracle::{fd_state_variation, FdSteps};
use impulse_volterra::variation::state_variation;
use impulse_volterra::SolveOptions;

fn assert_gold(name: &str) {
    let b = load(name);
    let r = gradient_report(
        b.problem.as_ref(),
        &b.schedule,
        &b.controls,
        400,
        &SolveOptions::default(),
        Some(FdSteps::default()),
    )
    .unwrap();
    let fd_tau = r.fd_dtau.as_ref().unwrap();
    for (j, (g, fd)) in r.dj_dtau.iter().zip(fd_tau).enumerate() {
        assert!(
            relative(*g, *fd, 1e-6) < 1e-3,
            "{name} dJ/dtau_{}: {g} vs {fd}",
            j + 1
        );
    }
    let fd_a = r.fd_da.as_ref().unwrap();
    for (g, fd) in r.dj_da.iter().zip(fd_a.iter()) {
        assert!(relative(*g, *fd, 1e-6) < 1e-3, "{name} dJ/da: {g} vs {fd}");
    }
}

#[test]
fn full_problem_gradients_match_differences() {
    assert_gold("P-FULL");
}

#[test]
fn two_impulse_full_problem_gradients_match_differences() {
    assert_gold("P-COUPLED-FULL");
}

#[test]
fn coupled_scalar_gradients_match_differences() {
    assert_gold("P-COUPLED");
}

#[test]
fn oscillator_gradients_match_differences() {
    assert_gold("P-ODE");
}

#[test]
fn counting_jumps_gradient_is_exact() {
    let b = load("P-JUMP");
    let r = gradient_report(
        b.problem.as_ref(),
        &b.schedule,
        &b.controls,
        400,
        &SolveOptions::default(),
        Some(FdSteps::default()),
    )
    .unwrap();
    for (g, expected) in r.dj_dtau.iter().zip([-1.0, -3.0]) {
        assert!((g - expected).abs() < 1e-6);
    }
    for (fd, expected) in r.fd_dtau.unwrap().iter().zip([-1.0, -3.0]) {
        assert!((fd - expected).abs() < 1e-6);
    }
}

#[test]
fn state_variations_match_moving_node_differences() {
    for name in ["P-FULL", "P-COUPLED-FULL", "P-ODE"] {
        let b = load(name);
        let a = analysis(&b, 400);
        for j in 1..=b.schedule.len() {
            let bundle = state_variation(&a, j);
            let fd = fd_state_variation(
                b.problem.as_ref(),
                &b.schedule,
                &b.controls,
                &a.mesh,
                j,
                1e-5,
                &SolveOptions::default(),
            )
            .unwrap();
            let lp = a.mesh.left_point(j);
            let dj_err = (&bundle.dj - &fd[lp]).amax() / fd[lp].amax();
            assert!(dj_err < 1e-3, "{name} D_{j}: relative {dj_err:e}");

            let mut scale = 0.0_f64;
            let mut worst = 0.0_f64;
            for p in a.mesh.right_point(j)..a.mesh.point_count() {
                let node = a.mesh.node_of_point(p);
                if a.mesh.impulse_nodes().contains(&node) {
                    continue;
                }
                scale = scale.max(fd[p].amax());
                worst = worst.max((&bundle.djy[p] - &fd[p]).amax());
            }
            assert!(
                worst / scale < 1e-3,
                "{name} j = {j}: relative {:e}",
                worst / scale
            );
        }
    }
}
