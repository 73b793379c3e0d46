//! The residual suite behind the `check` command.

use impulse_volterra::analysis::Analysis;
use impulse_volterra::gradient::{
    costate_p, costate_p_residual, costate_phi, costate_phi_residual,
};
use impulse_volterra::linear::{build_gamma, gamma_by_paths, inner_product, ImpulseArray};
use impulse_volterra::ode::{psi_costate, psi_residual, rho_matrix, rho_residual, OdeProblem};
use impulse_volterra::variation::{state_variation, variation_residual};
use impulse_volterra::{jump_residual, Vector};

use crate::config::CheckTolerances;

/// Largest `N` for which the increasing-path enumeration is run.
const PATH_LIMIT: usize = 12;

/// One line of the check summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckRecord {
    pub fn new(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

/// Smooth deterministic test functions for the duality check.
fn wave(points: usize, dim: usize, phase: f64) -> Vec<Vector> {
    (0..points)
        .map(|p| Vector::from_fn(dim, |r, _| (0.37 * p as f64 + phase + r as f64).sin()))
        .collect()
}

fn largest(a: &ImpulseArray) -> f64 {
    a.max_abs_diff(&ImpulseArray::zeros(a.size(), a.dim()))
}

/// Runs every residual check that applies to the problem.
pub fn run_checks(
    analysis: &Analysis,
    ode: Option<&dyn OdeProblem>,
    tol: &CheckTolerances,
) -> Vec<CheckRecord> {
    let system = &analysis.system;
    let mesh = &analysis.mesh;
    let n_imp = analysis.impulse_count();
    let mut out = Vec::new();

    let jumps = jump_residual(
        analysis.problem,
        analysis.schedule,
        analysis.controls,
        &analysis.trajectory,
    );
    out.push(CheckRecord::new(
        "jump_identity",
        jumps.iter().fold(0.0, |m, v| m.max(*v)),
        tol.jump,
    ));

    if n_imp <= PATH_LIMIT {
        let series = build_gamma(system.lambda());
        let paths = gamma_by_paths(system.lambda()).expect("size checked above");
        let gap = series.max_abs_diff(&paths) / largest(&series).max(1.0);
        out.push(CheckRecord::new("gamma_paths", gap, tol.gamma));
    }

    let resolvent = system.resolvent();
    out.push(CheckRecord::new(
        "resolvent_identity",
        resolvent.identity_residual(system),
        tol.identity,
    ));
    let rows = (1..=n_imp + 1)
        .map(|l| {
            let p = mesh.left_point(l);
            system.resolvent_row_residual(p, &system.resolvent_row(p))
        })
        .fold(0.0, f64::max);
    out.push(CheckRecord::new("resolvent_rows", rows, tol.identity));

    let p = costate_p(analysis);
    out.push(CheckRecord::new(
        "costate_p",
        costate_p_residual(analysis, &p),
        tol.identity,
    ));
    let phi = costate_phi(analysis);
    out.push(CheckRecord::new(
        "costate_phi",
        costate_phi_residual(system, &phi),
        tol.identity,
    ));

    let points = mesh.point_count();
    let (eta, zeta) = (
        wave(points, system.dim(), 0.0),
        wave(points, system.dim(), 1.3),
    );
    let y = system.solve_lifted(&eta);
    let z = system.adjoint(&zeta);
    let (lhs, rhs) = (
        inner_product(mesh, &zeta, &y),
        inner_product(mesh, &z, &eta),
    );
    out.push(CheckRecord::new(
        "duality",
        (lhs - rhs).abs() / lhs.abs().max(1.0),
        tol.duality,
    ));

    let variation = (1..=n_imp)
        .map(|j| variation_residual(analysis, &state_variation(analysis, j)))
        .fold(0.0, f64::max);
    out.push(CheckRecord::new(
        "state_variation",
        variation,
        tol.variation,
    ));

    if let Some(ode) = ode {
        let psi = psi_costate(analysis, p);
        out.push(CheckRecord::new(
            "ode_psi",
            psi_residual(ode, analysis, &psi),
            tol.ode,
        ));
        let rho = (1..=n_imp + 1)
            .map(|l| rho_residual(ode, analysis, &rho_matrix(analysis, l)))
            .fold(0.0, f64::max);
        out.push(CheckRecord::new("ode_rho", rho, tol.ode));
    }
    out
}
