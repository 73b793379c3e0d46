//! First-order variations of the state with respect to one impulse instant.
//!
//! For `t > τ_j` the derivative `∂_j y(t)` solves a linear impulsive
//! equation with forcing
//! `η_j(t) = Ωf(t, τ_j) + ∂g/∂τ_j + ∂g/∂y_j · D_j`, where `D_j` is the total
//! derivative of `y(τ_j^-)` along the moving instant and `Ω` the jump of a
//! quantity across `τ_j` (left data minus right data).

use crate::analysis::Analysis;
use crate::schedule::ControlVector;
use crate::state::PiecewiseTrajectory;
use crate::Vector;

/// `Ωφ = φ(y(τ_i^-), a_{i−1}) − φ(y(τ_i^+), a_i)`.
pub fn oscillation<T, F>(
    phi: F,
    i: usize,
    trajectory: &PiecewiseTrajectory,
    controls: &ControlVector,
) -> T
where
    T: std::ops::Sub<Output = T>,
    F: Fn(&Vector, &Vector) -> T,
{
    phi(trajectory.left_limit(i), controls.level(i - 1))
        - phi(trajectory.right_limit(i), controls.level(i))
}

/// Variation of the state with respect to `τ_j`.
///
/// Grid functions are stored on the whole grid and are zero before `τ_j^+`.
#[derive(Debug, Clone)]
pub struct VariationBundle {
    pub j: usize,
    /// `D_j y(τ_j^-)`.
    pub dj: Vector,
    /// `η_j`.
    pub eta: Vec<Vector>,
    /// Jump part `∂g/∂τ_j + ∂g/∂y_j · D_j` of `η_j`.
    pub eta_jump: Vec<Vector>,
    /// `η̃_j`, the forcing lifted through later impulses.
    pub eta_tilde: Vec<Vector>,
    /// `∂_j y`.
    pub djy: Vec<Vector>,
}

impl VariationBundle {
    /// `∂_j y(τ_ℓ^-)` for `ℓ ∈ j+1..=N+1`.
    pub fn left_limit(&self, analysis: &Analysis, l: usize) -> &Vector {
        &self.djy[analysis.mesh.left_point(l)]
    }
}

/// `D_j = ẏ0(τ_j) + f(τ_j, τ_j, y(τ_j^-), a_{j−1}) + ∫_0^{τ_j} ∂_t f(τ_j, s, y, u) ds + ∂_t g(τ_j, …)`.
pub fn total_derivative(analysis: &Analysis, j: usize) -> Vector {
    let problem = analysis.problem;
    let mesh = &analysis.mesh;
    let t = analysis.schedule.boundary(j);
    let lp = mesh.left_point(j);
    let y_minus = analysis.trajectory.at(lp);
    let mut d =
        problem.forcing_rate(t) + problem.kernel(t, t, y_minus, analysis.controls.level(j - 1));
    for q in 0..=lp {
        d += mesh.quadrature_weight(lp, q)
            * problem.kernel_dt(
                t,
                mesh.time(q),
                analysis.trajectory.at(q),
                analysis.level_at(q),
            );
    }
    d + problem.jump_dt(t, &analysis.history(j - 1))
}

/// `(Ωf(t_p, τ_j), ∂g/∂τ_j + ∂g/∂y_j · D_j)` at grid point `p ≥ τ_j^+`.
pub fn eta_parts(analysis: &Analysis, j: usize, dj: &Vector, p: usize) -> (Vector, Vector) {
    let problem = analysis.problem;
    let t = analysis.mesh.time(p);
    let tau = analysis.schedule.boundary(j);
    let omega = oscillation(
        |y, a| problem.kernel(t, tau, y, a),
        j,
        &analysis.trajectory,
        analysis.controls,
    );
    let h = analysis.history(analysis.mesh.interval(p));
    let jump = problem.jump_dtau(t, &h, j) + problem.jump_dy(t, &h, j) * dj;
    (omega, jump)
}

/// `η_j(t_p)` for `p ≥ τ_j^+`.
pub fn eta_j(analysis: &Analysis, j: usize, dj: &Vector, p: usize) -> Vector {
    let (omega, jump) = eta_parts(analysis, j, dj, p);
    omega + jump
}

/// `∂_j y` on the grid, with `D_j`, `η_j` and `η̃_j`.
pub fn state_variation(analysis: &Analysis, j: usize) -> VariationBundle {
    let mesh = &analysis.mesh;
    let dim = analysis.problem.state_dim();
    let dj = total_derivative(analysis, j);
    let start = mesh.right_point(j);
    let mut eta = vec![Vector::zeros(dim); mesh.point_count()];
    let mut eta_jump = eta.clone();
    for p in start..mesh.point_count() {
        let (omega, jump) = eta_parts(analysis, j, &dj, p);
        eta[p] = omega + &jump;
        eta_jump[p] = jump;
    }
    let eta_tilde = analysis.system.lift_forcing(&eta);
    let djy = analysis.system.solve_lifted(&eta_tilde);
    VariationBundle {
        j,
        dj,
        eta,
        eta_jump,
        eta_tilde,
        djy,
    }
}

/// Max-norm residual of the unlifted equation for `∂_j y`, which includes the
/// left-limit recursion
/// `∂_j y(τ_ℓ^-) = η_j(τ_ℓ^-) + ∫ f_y ∂_j y + Σ_{j<i<ℓ} ∂g/∂y_i ∂_j y(τ_i^-)`.
pub fn variation_residual(analysis: &Analysis, bundle: &VariationBundle) -> f64 {
    analysis.system.forward_residual(&bundle.eta, &bundle.djy)
}
