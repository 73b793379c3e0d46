//! Co-states and gradients of the cost with respect to the impulse instants
//! and the control levels.
//!
//! Both gradients are assembled from one adjoint solve each. The instant
//! gradient uses the co-state `p` (adjoint of `F_y`) together with the state
//! variations `∂_j y`; the level gradient uses `φ`, the adjoint of `F_y` plus
//! the terminal-cost sensitivities pulled back through the impulse coupling.

use crate::analysis::Analysis;
use crate::linear::{DiscreteResolvent, LinearSystem};
use crate::mesh::build_mesh;
use crate::oracle::{fd_gradient, FdSteps};
use crate::problem::{ControlBox, ImpulsiveProblem};
use crate::schedule::{ControlVector, ImpulseSchedule};
use crate::state::SolveOptions;
use crate::variation::{oscillation, state_variation, VariationBundle};
use crate::{Matrix, Result, Vector};

/// `p(t) = F_y(t) + ∫_t^T F_y(s) R(s, t) ds`, computed as the adjoint solve with forcing `F_y`.
pub fn costate_p(analysis: &Analysis) -> Vec<Vector> {
    analysis.system.adjoint(&analysis.running_cost_dy())
}

/// Same co-state from an explicit resolvent.
pub fn costate_p_from_resolvent(analysis: &Analysis, resolvent: &DiscreteResolvent) -> Vec<Vector> {
    resolvent.apply_adjoint(&analysis.mesh, &analysis.running_cost_dy())
}

/// Max-norm residual of the co-state equation
/// `p(t) = F_y + ∫_t^T p(s) f_y(s, t) ds + Σ_k Σ_{i≥k} (∫_{τ_i}^T p λ_i) Γ̂_ik f_y(τ_k^-, t)`.
pub fn costate_p_residual(analysis: &Analysis, p: &[Vector]) -> f64 {
    analysis
        .system
        .adjoint_residual(&analysis.running_cost_dy(), p)
}

/// `h(t_q, y, a) = F(t_q, y, a) + ∫_{t_q}^T p(s) f(s, t_q, y, a) ds`.
pub fn hamiltonian(analysis: &Analysis, p: &[Vector], q: usize, y: &Vector, a: &Vector) -> f64 {
    let mesh = &analysis.mesh;
    let tq = mesh.time(q);
    let mut h = analysis.problem.running_cost(tq, y, a);
    for r in q..mesh.point_count() {
        let w = mesh.tail_weight(q, r);
        if w != 0.0 {
            h += w * p[r].dot(&analysis.problem.kernel(mesh.time(r), tq, y, a));
        }
    }
    h
}

/// `|Ωh_j − (ΩF + ∫ p Ωf)|` at `τ_j`.
pub fn omega_identity_residual(analysis: &Analysis, p: &[Vector], j: usize) -> f64 {
    let problem = analysis.problem;
    let mesh = &analysis.mesh;
    let rp = mesh.right_point(j);
    let tau = analysis.schedule.boundary(j);
    let omega_h = oscillation(
        |y, a| hamiltonian(analysis, p, rp, y, a),
        j,
        &analysis.trajectory,
        analysis.controls,
    );
    let omega_f = oscillation(
        |y, a| problem.running_cost(tau, y, a),
        j,
        &analysis.trajectory,
        analysis.controls,
    );
    let integral: f64 = (rp..mesh.point_count())
        .map(|r| {
            let t = mesh.time(r);
            let of = oscillation(
                |y, a| problem.kernel(t, tau, y, a),
                j,
                &analysis.trajectory,
                analysis.controls,
            );
            mesh.weight(r) * p[r].dot(&of)
        })
        .sum();
    (omega_h - omega_f - integral).abs()
}

/// Terms of `∂J/∂τ_j`; [`TauTerms::total`] is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TauTerms {
    /// `Ωh_j`, the jump of the Hamiltonian across `τ_j`.
    pub hamiltonian_jump: f64,
    /// `∫_{τ_j}^T p (∂g/∂τ_j + ∂g/∂y_j D_j) dt`.
    pub jump_sensitivity: f64,
    /// `∂G/∂τ_j`.
    pub terminal_time: f64,
    /// `∂G/∂y_j · D_j`.
    pub terminal_state: f64,
    /// `Σ_{ℓ>j} ∂G/∂y_ℓ · ∂_j y(τ_ℓ^-)`.
    pub downstream_terminal: f64,
    /// `∫_{τ_j}^T p (η̃_j − η_j) dt`, the forcing carried through later impulses.
    pub lift_coupling: f64,
}

impl TauTerms {
    pub fn total(&self) -> f64 {
        self.hamiltonian_jump
            + self.jump_sensitivity
            + self.terminal_time
            + self.terminal_state
            + self.downstream_terminal
            + self.lift_coupling
    }
}

/// Terms of `∂J/∂τ_j` from the co-state `p` and the variation bundle of `j`.
pub fn tau_terms(analysis: &Analysis, p: &[Vector], bundle: &VariationBundle) -> TauTerms {
    let mesh = &analysis.mesh;
    let j = bundle.j;
    let rp = mesh.right_point(j);
    let hamiltonian_jump = oscillation(
        |y, a| hamiltonian(analysis, p, rp, y, a),
        j,
        &analysis.trajectory,
        analysis.controls,
    );
    let mut jump_sensitivity = 0.0;
    let mut lift_coupling = 0.0;
    for r in rp..mesh.point_count() {
        let c = mesh.weight(r);
        jump_sensitivity += c * p[r].dot(&bundle.eta_jump[r]);
        lift_coupling += c * p[r].dot(&(&bundle.eta_tilde[r] - &bundle.eta[r]));
    }
    let th = analysis.terminal_history();
    let g = analysis.problem;
    let downstream_terminal = (j + 1..=analysis.impulse_count() + 1)
        .map(|l| {
            g.terminal_cost_dy(&th, l)
                .dot(bundle.left_limit(analysis, l))
        })
        .sum();
    TauTerms {
        hamiltonian_jump,
        jump_sensitivity,
        terminal_time: g.terminal_cost_dtau(&th, j),
        terminal_state: g.terminal_cost_dy(&th, j).dot(&bundle.dj),
        downstream_terminal,
        lift_coupling,
    }
}

/// `∂J/∂τ_j` for `j = 1..N` with the per-term breakdown.
pub fn grad_tau(analysis: &Analysis, p: &[Vector]) -> Vec<TauTerms> {
    (1..=analysis.impulse_count())
        .map(|j| tau_terms(analysis, p, &state_variation(analysis, j)))
        .collect()
}

/// Max-norm of a gradient vector.
pub fn stationarity_tau_residual(grad: &[f64]) -> f64 {
    grad.iter().fold(0.0, |m, g| m.max(g.abs()))
}

/// Co-state of the control-level gradient.
#[derive(Debug, Clone)]
pub struct CostatePhi {
    /// `φ` on the grid.
    pub phi: Vec<Vector>,
    /// Forcing `F_y + Σ_k μ_k f_y(τ_k^-, ·)` of the adjoint equation solved by `−φ`.
    pub forcing: Vec<Vector>,
    /// `μ_k = Σ_{ℓ≥k} ∂G/∂y_ℓ (I + Γ)_ℓk` for `k = 1..N+1`.
    pub terminal_pullback: Vec<Vector>,
}

/// Solves for `φ`: `−φ` is the adjoint of the forcing `F_y + Σ_k μ_k f_y(τ_k^-, ·)`.
pub fn costate_phi(analysis: &Analysis) -> CostatePhi {
    let mesh = &analysis.mesh;
    let system = &analysis.system;
    let n_imp = analysis.impulse_count();
    let th = analysis.terminal_history();
    let g_y: Vec<Vector> = (1..=n_imp + 1)
        .map(|l| analysis.problem.terminal_cost_dy(&th, l))
        .collect();
    let mu: Vec<Vector> = (1..=n_imp + 1)
        .map(|k| {
            let mut m = Vector::zeros(system.dim());
            for l in k..=n_imp + 1 {
                m += system.gamma_hat().get(l, k).tr_mul(&g_y[l - 1]);
            }
            m
        })
        .collect();
    let mut forcing = analysis.running_cost_dy();
    for (q, zq) in forcing.iter_mut().enumerate() {
        for k in 1..=n_imp + 1 {
            let lk = mesh.left_point(k);
            if lk >= q {
                *zq += system.kernel().get(lk, q).tr_mul(&mu[k - 1]);
            }
        }
    }
    let phi = system.adjoint(&forcing).into_iter().map(|v| -v).collect();
    CostatePhi {
        phi,
        forcing,
        terminal_pullback: mu,
    }
}

/// Max-norm residual of the integral equation for `φ`.
pub fn costate_phi_residual(system: &LinearSystem, phi: &CostatePhi) -> f64 {
    let negated: Vec<Vector> = phi.phi.iter().map(|v| -v).collect();
    system.adjoint_residual(&phi.forcing, &negated)
}

/// `ξ_i(t_p) = ∂y(t_p)/∂a_i` forcing: the `f_a` integral over interval `i`
/// plus `∂g/∂a_i`, as `n×m` blocks for `p ≥ τ_i^+` (zero before).
fn level_forcing(analysis: &Analysis, i: usize) -> Vec<Matrix> {
    let problem = analysis.problem;
    let mesh = &analysis.mesh;
    let (n, m) = (problem.state_dim(), problem.control_dim());
    let first = mesh.right_point(i);
    let last = if i < analysis.impulse_count() {
        mesh.left_point(i + 1)
    } else {
        mesh.point_count() - 1
    };
    let a = analysis.controls.level(i);
    (0..mesh.point_count())
        .map(|p| {
            let mut xi = Matrix::zeros(n, m);
            if p < first {
                return xi;
            }
            let t = mesh.time(p);
            for q in first..=p.min(last) {
                xi += mesh.quadrature_weight(p, q)
                    * problem.kernel_da(t, mesh.time(q), analysis.trajectory.at(q), a);
            }
            xi + problem.jump_da(t, &analysis.history(mesh.interval(p)), i)
        })
        .collect()
}

/// `∂J/∂a_i` for `i = 0..N`, as an `(N+1)×m` matrix.
pub fn grad_a(analysis: &Analysis, phi: &CostatePhi) -> Matrix {
    let problem = analysis.problem;
    let mesh = &analysis.mesh;
    let system = &analysis.system;
    let n_imp = analysis.impulse_count();
    let m = problem.control_dim();
    let zeta_hat: Vec<Vector> = phi.phi.iter().map(|v| -v).collect();
    let moments = system.impulse_moments(&zeta_hat);
    let kappa: Vec<Vector> = (1..=n_imp + 1)
        .map(|l| {
            let mut k = phi.terminal_pullback[l - 1].clone();
            for i in l..=n_imp {
                k += system.gamma_hat().get(i, l).tr_mul(&moments[i - 1]);
            }
            k
        })
        .collect();
    let th = analysis.terminal_history();
    let mut out = Matrix::zeros(n_imp + 1, m);
    for i in 0..=n_imp {
        let xi = level_forcing(analysis, i);
        let a = analysis.controls.level(i);
        let mut g = problem.terminal_cost_da(&th, i);
        for p in 0..mesh.point_count() {
            let c = mesh.weight(p);
            if mesh.interval(p) == i {
                g += c * problem.running_cost_da(mesh.time(p), analysis.trajectory.at(p), a);
            }
            if p >= mesh.right_point(i) {
                g += c * xi[p].tr_mul(&zeta_hat[p]);
            }
        }
        for l in i + 1..=n_imp + 1 {
            g += xi[mesh.left_point(l)].tr_mul(&kappa[l - 1]);
        }
        out.row_mut(i).copy_from(&g.transpose());
    }
    out
}

/// `‖a − Π_box(a − ∇_a J)‖_max`.
pub fn variational_inequality_residual(
    grad: &Matrix,
    controls: &ControlVector,
    boxes: &[ControlBox],
) -> f64 {
    let mut worst = 0.0_f64;
    for (i, a) in controls.levels().iter().enumerate() {
        let g = grad.row(i).transpose();
        let projected = boxes[i].project(&(a - &g));
        worst = worst.max((a - projected).amax());
    }
    worst
}

/// Control boxes `0..=N` of a problem.
pub fn control_boxes(problem: &dyn ImpulsiveProblem, impulses: usize) -> Vec<ControlBox> {
    (0..=impulses).map(|i| problem.control_box(i)).collect()
}

/// Everything reported by a gradient run.
#[derive(Debug, Clone)]
pub struct GradientReport {
    pub cost: f64,
    pub dj_dtau: Vec<f64>,
    pub dj_da: Matrix,
    pub tau_terms: Vec<TauTerms>,
    pub tau_stationarity: f64,
    pub a_vi_residual: f64,
    pub fd_dtau: Option<Vec<f64>>,
    pub fd_da: Option<Matrix>,
}

/// Analytic gradients at `(τ, a)` on the uniform mesh with `M` sub-steps,
/// optionally with central finite-difference columns.
pub fn gradient_report(
    problem: &dyn ImpulsiveProblem,
    schedule: &ImpulseSchedule,
    controls: &ControlVector,
    points_per_interval: usize,
    options: &SolveOptions,
    fd: Option<FdSteps>,
) -> Result<GradientReport> {
    let mesh = build_mesh(schedule, points_per_interval)?;
    let analysis = Analysis::new(problem, schedule, controls, mesh, options)?;
    let p = costate_p(&analysis);
    let tau_terms = grad_tau(&analysis, &p);
    let dj_dtau: Vec<f64> = tau_terms.iter().map(TauTerms::total).collect();
    let phi = costate_phi(&analysis);
    let dj_da = grad_a(&analysis, &phi);
    let boxes = control_boxes(problem, schedule.len());
    let (fd_dtau, fd_da) = match fd {
        Some(steps) => {
            let (t, a) = fd_gradient(
                problem,
                schedule,
                controls,
                points_per_interval,
                steps,
                options,
            )?;
            (Some(t), Some(a))
        }
        None => (None, None),
    };
    Ok(GradientReport {
        cost: analysis.cost,
        tau_stationarity: stationarity_tau_residual(&dj_dtau),
        a_vi_residual: variational_inequality_residual(&dj_da, controls, &boxes),
        dj_dtau,
        dj_da,
        tau_terms,
        fd_dtau,
        fd_da,
    })
}
