//! The impulsive-ODE path against the general engine and a direct time stepper.

#![allow(clippy::needless_range_loop)]

mod common;

use common::{analysis, load};
use impulse_volterra::gradient::{costate_p, grad_tau};
use impulse_volterra::ode::{
    ode_grad_tau, ode_stationarity, psi_costate, psi_residual, rho_matrix, rho_residual,
    OdeProblem, RhoMatrix,
};
use impulse_volterra::Vector;

/// Classical RK4 between consecutive mesh nodes with `substeps` steps each,
/// applying the jump map at every impulse.
fn rk4_reference(
    ode: &dyn OdeProblem,
    nodes: &[f64],
    impulse_nodes: &[usize],
    levels: &[Vector],
    substeps: usize,
) -> Vec<Vector> {
    let mut y = ode.initial_state();
    let mut out = vec![y.clone()];
    let mut interval = 0;
    for k in 1..nodes.len() {
        let a = &levels[interval];
        let h = (nodes[k] - nodes[k - 1]) / substeps as f64;
        for s in 0..substeps {
            let t = nodes[k - 1] + s as f64 * h;
            let k1 = ode.rhs(t, &y, a);
            let k2 = ode.rhs(t + 0.5 * h, &(&y + 0.5 * h * &k1), a);
            let k3 = ode.rhs(t + 0.5 * h, &(&y + 0.5 * h * &k2), a);
            let k4 = ode.rhs(t + h, &(&y + h * &k3), a);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push(y.clone());
        if impulse_nodes.contains(&k) {
            y = ode.jump_map(nodes[k], &y, a);
            interval += 1;
            out.push(y.clone());
        }
    }
    out
}

#[test]
fn lifted_solution_matches_direct_stepper() {
    let b = load("P-ODE");
    let ode = b.ode.clone().unwrap();
    let a = analysis(&b, 400);
    let reference = rk4_reference(
        ode.as_ref(),
        a.mesh.nodes(),
        a.mesh.impulse_nodes(),
        b.controls.levels(),
        8,
    );
    assert_eq!(reference.len(), a.mesh.point_count());
    let worst = reference
        .iter()
        .zip(a.trajectory.states())
        .fold(0.0_f64, |m, (r, y)| m.max((r - y).amax()));
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn ode_gradient_equals_general_gradient() {
    let b = load("P-ODE");
    let ode = b.ode.clone().unwrap();
    let a = analysis(&b, 400);
    let p = costate_p(&a);
    let general: Vec<f64> = grad_tau(&a, &p).iter().map(|t| t.total()).collect();
    let psi = psi_costate(&a, p);
    let rhos: Vec<RhoMatrix> = (2..=b.schedule.len() + 1)
        .map(|l| rho_matrix(&a, l))
        .collect();
    let special = ode_grad_tau(ode.as_ref(), &a, &psi, &rhos);
    for (g, s) in general.iter().zip(&special) {
        assert!((g - s).abs() < 1e-6, "{general:?} vs {special:?}");
    }
    assert!((ode_stationarity(&special) - ode_stationarity(&general)).abs() < 1e-6);
}

#[test]
fn psi_and_rho_satisfy_their_backward_equations() {
    let b = load("P-ODE");
    let ode = b.ode.clone().unwrap();
    let a = analysis(&b, 400);
    let psi = psi_costate(&a, costate_p(&a));
    assert_eq!(psi.terminal().amax(), 0.0);
    assert!(psi_residual(ode.as_ref(), &a, &psi) < 1e-6);
    for l in 1..=b.schedule.len() + 1 {
        let rho = rho_matrix(&a, l);
        assert!(rho_residual(ode.as_ref(), &a, &rho) < 1e-6, "rho_{l}");
    }
}

#[test]
fn psi_derivative_reproduces_the_costate() {
    let b = load("P-ODE");
    let a = analysis(&b, 400);
    let p = costate_p(&a);
    // the raw co-state is O(Δ) off at segment ends; the exact-weight sweep is not
    let smooth = a.system.refine_adjoint(&a.running_cost_dy(), &p);
    let psi = psi_costate(&a, p);
    let points = a.mesh.point_count();
    let uniform =
        |q: usize| (q - 2..=q + 1).all(|k| (a.mesh.segment(k) - a.mesh.segment(q)).abs() < 1e-12);
    let mut worst = 0.0_f64;
    for q in 2..points - 3 {
        if a.mesh.segment(q) == 0.0 || !uniform(q) {
            continue;
        }
        let slope = -(&psi.psi[q + 1] - &psi.psi[q - 1]) / (2.0 * a.mesh.segment(q));
        worst = worst.max((slope - &smooth[q]).amax());
    }
    assert!(worst < 1e-5, "{worst:e}");

    let mut tail = smooth[points - 1].clone() * 0.0;
    let mut drift = 0.0_f64;
    for q in (0..points - 1).rev() {
        tail += 0.5 * a.mesh.segment(q) * (&smooth[q] + &smooth[q + 1]);
        drift = drift.max((&tail - &psi.psi[q]).amax());
    }
    assert!(drift < 1e-6, "{drift:e}");
}

#[test]
fn rho_rows_do_not_depend_on_the_differentiated_instant() {
    let b = load("P-ODE");
    let a = analysis(&b, 200);
    for l in 2..=b.schedule.len() + 1 {
        let lp = a.mesh.left_point(l);
        let global = rho_matrix(&a, l);
        for j in 1..l {
            let start = a.mesh.right_point(j);
            let restricted = a.system.resolvent_from(start);
            for q in start..=lp {
                assert!(
                    (restricted.kernel(lp, q) - &global.row[q]).amax() < 1e-10,
                    "l = {l}, j = {j}"
                );
            }
        }
    }
}

#[test]
fn rho_rows_do_depend_on_the_target_impulse() {
    // The rows R(τ_ℓ^-, ·) for different ℓ are different functions on their
    // common domain, so ρ is indexed by ℓ.
    let b = load("P-ODE");
    let a = analysis(&b, 200);
    let (r2, r3) = (rho_matrix(&a, 2), rho_matrix(&a, 3));
    let q = a.mesh.left_point(1) / 2;
    assert!((&r2.rho[q] - &r3.rho[q]).amax() > 1e-3);
}
