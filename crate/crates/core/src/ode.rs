//! Impulsive ODEs `ẏ = f(t, y, a_i)` on `(τ_i, τ_{i+1})` with jump maps
//! `y(τ_i^+) = I(τ_i, y(τ_i^-), a_{i−1})`.
//!
//! [`LiftedOde`] writes such a system as an impulsive Volterra problem with
//! kernel `f(s, y, a)` and jump aggregate `Σ_i Ĩ(τ_i, y(τ_i^-), a_{i−1})`,
//! where `Ĩ` is the increment of the jump map. The instant gradient then
//! simplifies: the co-state enters only through `ψ(t) = ∫_t^T p`, and the
//! resolvent rows only through `ρ_ℓ(t) = ∫_t^{τ_ℓ} R(τ_ℓ^-, s) ds`.

use std::sync::Arc;

use crate::analysis::Analysis;
use crate::linear::{build_gamma, ImpulseArray};
use crate::problem::{ControlBox, CostFunctional, ImpulseHistory, ImpulsiveProblem};
use crate::{Matrix, Vector};

/// How the jump map acts on the left limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpConvention {
    /// `y(τ^+) = I(τ, y(τ^-), a)`.
    Replacement,
    /// `y(τ^+) = y(τ^-) + I(τ, y(τ^-), a)`.
    Increment,
}

/// An impulsive controlled ODE with its partial derivatives.
pub trait OdeProblem: CostFunctional {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn horizon(&self) -> f64;
    fn initial_state(&self) -> Vector;
    fn convention(&self) -> JumpConvention;

    fn control_box(&self, _level: usize) -> ControlBox {
        ControlBox::unbounded(self.control_dim())
    }

    fn rhs(&self, t: f64, y: &Vector, a: &Vector) -> Vector;
    fn rhs_dy(&self, t: f64, y: &Vector, a: &Vector) -> Matrix;
    fn rhs_da(&self, t: f64, y: &Vector, a: &Vector) -> Matrix;

    fn jump_map(&self, tau: f64, y: &Vector, a: &Vector) -> Vector;
    fn jump_map_dtau(&self, tau: f64, y: &Vector, a: &Vector) -> Vector;
    fn jump_map_dy(&self, tau: f64, y: &Vector, a: &Vector) -> Matrix;
    fn jump_map_da(&self, tau: f64, y: &Vector, a: &Vector) -> Matrix;

    /// Increment `Ĩ` with `y(τ^+) = y(τ^-) + Ĩ`.
    fn increment(&self, tau: f64, y: &Vector, a: &Vector) -> Vector {
        match self.convention() {
            JumpConvention::Replacement => self.jump_map(tau, y, a) - y,
            JumpConvention::Increment => self.jump_map(tau, y, a),
        }
    }

    fn increment_dy(&self, tau: f64, y: &Vector, a: &Vector) -> Matrix {
        match self.convention() {
            JumpConvention::Replacement => {
                self.jump_map_dy(tau, y, a) - Matrix::identity(y.len(), y.len())
            }
            JumpConvention::Increment => self.jump_map_dy(tau, y, a),
        }
    }
}

/// The Volterra form of an [`OdeProblem`].
#[derive(Clone)]
pub struct LiftedOde {
    ode: Arc<dyn OdeProblem>,
}

impl LiftedOde {
    pub fn new(ode: Arc<dyn OdeProblem>) -> Self {
        Self { ode }
    }

    pub fn ode(&self) -> &dyn OdeProblem {
        self.ode.as_ref()
    }
}

impl CostFunctional for LiftedOde {
    fn running_cost(&self, t: f64, y: &Vector, a: &Vector) -> f64 {
        self.ode.running_cost(t, y, a)
    }
    fn running_cost_dy(&self, t: f64, y: &Vector, a: &Vector) -> Vector {
        self.ode.running_cost_dy(t, y, a)
    }
    fn running_cost_da(&self, t: f64, y: &Vector, a: &Vector) -> Vector {
        self.ode.running_cost_da(t, y, a)
    }
    fn terminal_cost(&self, h: &ImpulseHistory) -> f64 {
        self.ode.terminal_cost(h)
    }
    fn terminal_cost_dtau(&self, h: &ImpulseHistory, j: usize) -> f64 {
        self.ode.terminal_cost_dtau(h, j)
    }
    fn terminal_cost_dy(&self, h: &ImpulseHistory, j: usize) -> Vector {
        self.ode.terminal_cost_dy(h, j)
    }
    fn terminal_cost_da(&self, h: &ImpulseHistory, i: usize) -> Vector {
        self.ode.terminal_cost_da(h, i)
    }
}

impl ImpulsiveProblem for LiftedOde {
    fn state_dim(&self) -> usize {
        self.ode.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.ode.control_dim()
    }
    fn horizon(&self) -> f64 {
        self.ode.horizon()
    }
    fn control_box(&self, level: usize) -> ControlBox {
        self.ode.control_box(level)
    }
    fn forcing(&self, _t: f64) -> Vector {
        self.ode.initial_state()
    }
    fn forcing_rate(&self, _t: f64) -> Vector {
        Vector::zeros(self.ode.state_dim())
    }
    fn kernel(&self, _t: f64, s: f64, y: &Vector, a: &Vector) -> Vector {
        self.ode.rhs(s, y, a)
    }
    fn kernel_dy(&self, _t: f64, s: f64, y: &Vector, a: &Vector) -> Matrix {
        self.ode.rhs_dy(s, y, a)
    }
    fn kernel_da(&self, _t: f64, s: f64, y: &Vector, a: &Vector) -> Matrix {
        self.ode.rhs_da(s, y, a)
    }
    fn kernel_dt(&self, _t: f64, _s: f64, _y: &Vector, _a: &Vector) -> Vector {
        Vector::zeros(self.ode.state_dim())
    }
    fn jump(&self, _t: f64, h: &ImpulseHistory) -> Vector {
        let mut out = Vector::zeros(self.ode.state_dim());
        for i in 1..=h.impulse_count() {
            out += self.ode.increment(h.tau(i), h.state(i), h.level(i - 1));
        }
        out
    }
    fn jump_dtau(&self, _t: f64, h: &ImpulseHistory, j: usize) -> Vector {
        self.ode.jump_map_dtau(h.tau(j), h.state(j), h.level(j - 1))
    }
    fn jump_dy(&self, _t: f64, h: &ImpulseHistory, j: usize) -> Matrix {
        self.ode.increment_dy(h.tau(j), h.state(j), h.level(j - 1))
    }
    fn jump_da(&self, _t: f64, h: &ImpulseHistory, i: usize) -> Matrix {
        if i < h.impulse_count() {
            self.ode
                .jump_map_da(h.tau(i + 1), h.state(i + 1), h.level(i))
        } else {
            Matrix::zeros(self.ode.state_dim(), self.ode.control_dim())
        }
    }
}

/// Backward trapezoid `v_q = ∫_{t_q}^{t_last} u` over the grid points `0..=last`.
fn backward_trapezoid<T>(analysis: &Analysis, values: &[T], zero: T) -> Vec<T>
where
    T: Clone + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let mesh = &analysis.mesh;
    let mut out = vec![zero; values.len()];
    for q in (0..values.len() - 1).rev() {
        let half = 0.5 * mesh.segment(q);
        out[q] = out[q + 1].clone() + (values[q].clone() + values[q + 1].clone()) * half;
    }
    out
}

/// Local residual of `v_q − v_{q+1} = ½ Δ_q (u_q + u_{q+1})` against a
/// claimed derivative `u`, as the max-norm over all segments.
fn trapezoid_residual<T, F>(analysis: &Analysis, values: &[T], rhs: &[T], norm: F) -> f64
where
    T: Clone
        + std::ops::Sub<Output = T>
        + std::ops::Add<Output = T>
        + std::ops::Mul<f64, Output = T>,
    F: Fn(&T) -> f64,
{
    let mesh = &analysis.mesh;
    (0..values.len() - 1)
        .map(|q| {
            let half = 0.5 * mesh.segment(q);
            let r = values[q].clone()
                - values[q + 1].clone()
                - (rhs[q].clone() + rhs[q + 1].clone()) * half;
            norm(&r)
        })
        .fold(0.0, f64::max)
}

/// Coupling arrays `Λ_ki = ∂Ĩ(τ_i, y(τ_i^-), a_{i−1})/∂y` for `i < k ≤ N + 1`
/// and `I + Γ`, assembled from the jump map alone.
pub fn ode_coupling(ode: &dyn OdeProblem, analysis: &Analysis) -> (Vec<Matrix>, ImpulseArray) {
    let n_imp = analysis.impulse_count();
    let n = ode.state_dim();
    let left = analysis.left_states();
    let lambda_i: Vec<Matrix> = (1..=n_imp)
        .map(|i| {
            ode.increment_dy(
                analysis.schedule.boundary(i),
                &left[i - 1],
                analysis.controls.level(i - 1),
            )
        })
        .collect();
    let mut lambda = ImpulseArray::zeros(n_imp + 1, n);
    for k in 2..=n_imp + 1 {
        for (i, l) in lambda_i.iter().enumerate().take(k - 1) {
            lambda.set(k, i + 1, l.clone());
        }
    }
    let gamma_hat = build_gamma(&lambda).add(&ImpulseArray::identity(n_imp + 1, n));
    (lambda_i, gamma_hat)
}

/// `ψ(t) = ∫_t^T p(s) ds` with the co-state `p` of the instant gradient.
#[derive(Debug, Clone)]
pub struct PsiCostate {
    pub p: Vec<Vector>,
    pub psi: Vec<Vector>,
    right_points: Vec<usize>,
}

impl PsiCostate {
    /// `ψ(τ_i^+)`, `i = 1..N`.
    pub fn right_limit(&self, i: usize) -> &Vector {
        &self.psi[self.right_points[i - 1]]
    }

    pub fn terminal(&self) -> &Vector {
        &self.psi[self.psi.len() - 1]
    }
}

pub fn psi_costate(analysis: &Analysis, p: Vec<Vector>) -> PsiCostate {
    let psi = backward_trapezoid(analysis, &p, Vector::zeros(analysis.system.dim()));
    PsiCostate {
        p,
        psi,
        right_points: (1..=analysis.impulse_count())
            .map(|i| analysis.mesh.right_point(i))
            .collect(),
    }
}

/// Residual of the backward equation
/// `−ψ̇ = F_y + ψ f_y + Σ_k Σ_{i≥k} ψ(τ_i^+) Ĩ_y,i (I + Γ)_ik f_y · 1{t ≤ τ_k}`,
/// tested with the trapezoid rule on every segment.
pub fn psi_residual(ode: &dyn OdeProblem, analysis: &Analysis, psi: &PsiCostate) -> f64 {
    let mesh = &analysis.mesh;
    let n_imp = analysis.impulse_count();
    let (lambda_i, gamma_hat) = ode_coupling(ode, analysis);
    let pulled: Vec<Vector> = (1..=n_imp)
        .map(|k| {
            let mut v = Vector::zeros(ode.state_dim());
            for i in k..=n_imp {
                v += gamma_hat
                    .get(i, k)
                    .tr_mul(&lambda_i[i - 1].tr_mul(psi.right_limit(i)));
            }
            v
        })
        .collect();
    let rhs: Vec<Vector> = (0..mesh.point_count())
        .map(|q| {
            let (t, y, a) = (
                mesh.time(q),
                analysis.trajectory.at(q),
                analysis.level_at(q),
            );
            let fy = ode.rhs_dy(t, y, a);
            let mut carry = psi.psi[q].clone();
            for k in 1..=n_imp {
                if mesh.left_point(k) >= q {
                    carry += &pulled[k - 1];
                }
            }
            ode.running_cost_dy(t, y, a) + fy.tr_mul(&carry)
        })
        .collect();
    trapezoid_residual(analysis, &psi.psi, &rhs, |v: &Vector| v.amax())
}

/// `ρ_ℓ(t) = ∫_t^{τ_ℓ} R(τ_ℓ^-, s) ds` on the grid points up to `τ_ℓ^-`.
#[derive(Debug, Clone)]
pub struct RhoMatrix {
    pub l: usize,
    /// `R(τ_ℓ^-, t_q)` for `q ≤ τ_ℓ^-`.
    pub row: Vec<Matrix>,
    pub rho: Vec<Matrix>,
}

impl RhoMatrix {
    /// `ρ_ℓ` integrated over the grid points of interval `m < ℓ`.
    pub fn interval_integral(&self, analysis: &Analysis, m: usize) -> Matrix {
        let mesh = &analysis.mesh;
        &self.rho[mesh.right_point(m)] - &self.rho[mesh.left_point(m + 1)]
    }
}

pub fn rho_matrix(analysis: &Analysis, l: usize) -> RhoMatrix {
    let n = analysis.system.dim();
    let row = analysis.system.resolvent_row(analysis.mesh.left_point(l));
    let rho = backward_trapezoid(analysis, &row, Matrix::zeros(n, n));
    RhoMatrix { l, row, rho }
}

/// Residual of the backward equation
/// `−ρ̇ = (I + ρ) f_y + Σ_{k: t ≤ τ_k} Σ_{i=k}^{ℓ−1} (Ĩ_y,i + ρ(τ_i^+) Ĩ_y,i) (I + Γ)_ik f_y`
/// for `ρ_ℓ`, tested with the trapezoid rule on every segment before `τ_ℓ^-`.
pub fn rho_residual(ode: &dyn OdeProblem, analysis: &Analysis, rho: &RhoMatrix) -> f64 {
    let mesh = &analysis.mesh;
    let n = ode.state_dim();
    let l = rho.l;
    let (lambda_i, gamma_hat) = ode_coupling(ode, analysis);
    let pulled: Vec<Matrix> = (1..l)
        .map(|k| {
            let mut m = Matrix::zeros(n, n);
            for i in k..l {
                let factor = &lambda_i[i - 1] + &rho.rho[mesh.right_point(i)] * &lambda_i[i - 1];
                m += factor * gamma_hat.get(i, k);
            }
            m
        })
        .collect();
    let identity = Matrix::identity(n, n);
    let rhs: Vec<Matrix> = (0..rho.rho.len())
        .map(|q| {
            let fy = ode.rhs_dy(
                mesh.time(q),
                analysis.trajectory.at(q),
                analysis.level_at(q),
            );
            let mut carry = &identity + &rho.rho[q];
            for k in 1..l {
                if mesh.left_point(k) >= q {
                    carry += &pulled[k - 1];
                }
            }
            carry * fy
        })
        .collect();
    trapezoid_residual(analysis, &rho.rho, &rhs, |m: &Matrix| m.amax())
}

/// `D_j = f(τ_j, y(τ_j^-), a_{j−1})`.
pub fn ode_total_derivative(ode: &dyn OdeProblem, analysis: &Analysis, j: usize) -> Vector {
    ode.rhs(
        analysis.schedule.boundary(j),
        analysis.trajectory.left_limit(j),
        analysis.controls.level(j - 1),
    )
}

/// `∂J/∂τ_j` for `j = 1..N` from `ψ` and the rows `ρ_ℓ`, `ℓ = 2..N+1`.
///
/// `η_j` is constant after `τ_j`: `Ωf + Ĩ_τ + Ĩ_y D_j`. Its lift `η̃_j` is
/// constant on every later interval, so each `∂_j y(τ_ℓ^-)` only needs the
/// interval integrals of `ρ_ℓ`.
pub fn ode_grad_tau(
    ode: &dyn OdeProblem,
    analysis: &Analysis,
    psi: &PsiCostate,
    rhos: &[RhoMatrix],
) -> Vec<f64> {
    let n_imp = analysis.impulse_count();
    let traj = &analysis.trajectory;
    let controls = analysis.controls;
    let (lambda_i, gamma_hat) = ode_coupling(ode, analysis);
    let th = analysis.terminal_history();
    (1..=n_imp)
        .map(|j| {
            let tau = analysis.schedule.boundary(j);
            let (y_minus, y_plus) = (traj.left_limit(j), traj.right_limit(j));
            let (a_prev, a_next) = (controls.level(j - 1), controls.level(j));
            let dj = ode_total_derivative(ode, analysis, j);
            let omega_f = ode.rhs(tau, y_minus, a_prev) - ode.rhs(tau, y_plus, a_next);
            let omega_cost =
                ode.running_cost(tau, y_minus, a_prev) - ode.running_cost(tau, y_plus, a_next);
            let jump_part = ode.jump_map_dtau(tau, y_minus, a_prev) + &lambda_i[j - 1] * &dj;
            let eta = &omega_f + &jump_part;
            let psi_j = psi.right_limit(j);

            // η̃_j on interval m ≥ j
            let mut lifted = vec![eta.clone()];
            for m in j + 1..=n_imp {
                let mut v = eta.clone();
                for i in j + 1..=m {
                    let mut s = Matrix::zeros(ode.state_dim(), ode.state_dim());
                    for k in j + 1..=i {
                        s += gamma_hat.get(i, k);
                    }
                    v += &lambda_i[i - 1] * s * &eta;
                }
                lifted.push(v);
            }

            let mut grad = omega_cost + psi_j.dot(&omega_f) + psi_j.dot(&jump_part);
            grad += ode.terminal_cost_dtau(&th, j) + ode.terminal_cost_dy(&th, j).dot(&dj);
            for rho in rhos.iter().filter(|r| r.l > j) {
                let l = rho.l;
                let mut djy = lifted[l - 1 - j].clone();
                for m in j..l {
                    djy += rho.interval_integral(analysis, m) * &lifted[m - j];
                }
                grad += ode.terminal_cost_dy(&th, l).dot(&djy);
            }
            for i in j + 1..=n_imp {
                let mut s = Matrix::zeros(ode.state_dim(), ode.state_dim());
                for k in j + 1..=i {
                    s += gamma_hat.get(i, k);
                }
                grad += psi.right_limit(i).dot(&(&lambda_i[i - 1] * s * &eta));
            }
            grad
        })
        .collect()
}

/// Max-norm of the instant gradient.
pub fn ode_stationarity(grad: &[f64]) -> f64 {
    grad.iter().fold(0.0, |m, g| m.max(g.abs()))
}
