//! Forward Nyström solve of the state equation and evaluation of the cost.

use crate::mesh::{build_mesh, Mesh};
use crate::problem::{ImpulseHistory, ImpulsiveProblem};
use crate::schedule::{ControlVector, ImpulseSchedule};
use crate::{Error, Result, Vector};

/// Options for the implicit diagonal term of the trapezoid scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub fp_tol: f64,
    pub fp_max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            fp_tol: 1e-12,
            fp_max_iter: 50,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.fp_tol > 0.0 && self.fp_tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "fp_tol must be positive, got {}",
                self.fp_tol
            )));
        }
        if self.fp_max_iter == 0 {
            return Err(Error::InvalidArgument(
                "fp_max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// State values on every grid point of a [`Mesh`].
///
/// Impulse nodes carry two values, `y(τ_i^-)` and `y(τ_i^+)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseTrajectory {
    states: Vec<Vector>,
    left_points: Vec<usize>,
    right_points: Vec<usize>,
}

impl PiecewiseTrajectory {
    pub fn from_states(mesh: &Mesh, states: Vec<Vector>) -> Result<Self> {
        if states.len() != mesh.point_count() {
            return Err(Error::Dimension(format!(
                "{} states for {} grid points",
                states.len(),
                mesh.point_count()
            )));
        }
        let n = mesh.impulse_count();
        Ok(Self {
            states,
            left_points: (1..=n + 1).map(|i| mesh.left_point(i)).collect(),
            right_points: (1..=n).map(|i| mesh.right_point(i)).collect(),
        })
    }

    /// State at grid point `p`.
    pub fn at(&self, p: usize) -> &Vector {
        &self.states[p]
    }

    pub fn states(&self) -> &[Vector] {
        &self.states
    }

    /// `y(τ_i^-)` for `i ∈ 1..=N+1` (`i = N + 1` is `y(T^-)`).
    pub fn left_limit(&self, i: usize) -> &Vector {
        &self.states[self.left_points[i - 1]]
    }

    /// `y(τ_i^+)` for `i ∈ 1..=N`.
    pub fn right_limit(&self, i: usize) -> &Vector {
        &self.states[self.right_points[i - 1]]
    }

    /// All left limits `y(τ_1^-), …, y(τ_{N+1}^-)`.
    pub fn left_limits(&self) -> Vec<Vector> {
        self.left_points
            .iter()
            .map(|&p| self.states[p].clone())
            .collect()
    }

    pub fn right_limits(&self) -> Vec<Vector> {
        self.right_points
            .iter()
            .map(|&p| self.states[p].clone())
            .collect()
    }
}

/// Argument lists of `g` for a point in interval `interval`.
pub(crate) fn history<'a>(
    schedule: &'a ImpulseSchedule,
    controls: &'a ControlVector,
    left_states: &'a [Vector],
    interval: usize,
) -> ImpulseHistory<'a> {
    ImpulseHistory {
        taus: &schedule.times()[..interval],
        states: &left_states[..interval],
        levels: &controls.levels()[..=interval],
    }
}

/// Full lists handed to the terminal cost `G`.
pub(crate) fn terminal_history<'a>(
    schedule: &'a ImpulseSchedule,
    controls: &'a ControlVector,
    left_states: &'a [Vector],
) -> ImpulseHistory<'a> {
    ImpulseHistory {
        taus: schedule.times(),
        states: left_states,
        levels: controls.levels(),
    }
}

pub(crate) fn check_inputs(
    problem: &dyn ImpulsiveProblem,
    schedule: &ImpulseSchedule,
    controls: &ControlVector,
    mesh: &Mesh,
) -> Result<()> {
    mesh.check_schedule(schedule)?;
    if controls.len() != schedule.len() + 1 {
        return Err(Error::Dimension(format!(
            "{} control levels for {} impulses",
            controls.len(),
            schedule.len()
        )));
    }
    if controls.control_dim() != problem.control_dim() {
        return Err(Error::Dimension(format!(
            "controls have dimension {}, problem expects {}",
            controls.control_dim(),
            problem.control_dim()
        )));
    }
    if schedule.horizon() != problem.horizon() {
        return Err(Error::InvalidArgument(format!(
            "schedule horizon {} differs from problem horizon {}",
            schedule.horizon(),
            problem.horizon()
        )));
    }
    Ok(())
}

fn max_abs(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Solves the trapezoid discretization of the state equation on `mesh`.
///
/// At grid point `p` the scheme reads
/// `y_p = y0(t_p) + Σ_{q≤p} w_pq f(t_p, t_q, y_q, a_{I(q)}) + g(t_p, …)`, where
/// `w_pq` are the trapezoid weights over `[0, t_p]`. The implicit diagonal term
/// is resolved by fixed-point iteration.
pub fn solve_state(
    problem: &dyn ImpulsiveProblem,
    schedule: &ImpulseSchedule,
    controls: &ControlVector,
    mesh: &Mesh,
    options: &SolveOptions,
) -> Result<PiecewiseTrajectory> {
    options.validate()?;
    check_inputs(problem, schedule, controls, mesh)?;
    let n_imp = schedule.len();
    let points = mesh.point_count();
    let mut states: Vec<Vector> = Vec::with_capacity(points);
    let mut left_states: Vec<Vector> = Vec::with_capacity(n_imp + 1);
    let mut left_sum: Option<Vector> = None;

    for p in 0..points {
        let t = mesh.time(p);
        let interval = mesh.interval(p);
        let a = controls.level(interval);
        let integral = match left_sum.take() {
            // τ_i^+ directly follows τ_i^-: reuse that history sum and close it.
            Some(mut sum) => {
                let q = p - 1;
                sum += mesh.weight(q)
                    * problem.kernel(t, t, &states[q], controls.level(mesh.interval(q)));
                sum
            }
            None => {
                let mut sum = Vector::zeros(problem.state_dim());
                for (q, yq) in states.iter().enumerate() {
                    sum += mesh.weight(q)
                        * problem.kernel(t, mesh.time(q), yq, controls.level(mesh.interval(q)));
                }
                sum
            }
        };
        let jump = problem.jump(t, &history(schedule, controls, &left_states, interval));
        let base = problem.forcing(t) + &integral + jump;
        let d = mesh.diagonal_weight(p);
        let y = if d == 0.0 {
            base
        } else {
            let mut y = states.last().cloned().unwrap_or_else(|| base.clone());
            let mut converged = false;
            let mut update = f64::INFINITY;
            for _ in 0..options.fp_max_iter {
                let next = &base + d * problem.kernel(t, t, &y, a);
                update = max_abs(&(&next - &y));
                y = next;
                if !update.is_finite() {
                    break;
                }
                if update <= options.fp_tol * (1.0 + max_abs(&y)) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::FixedPointDiverged {
                    node: mesh.node_of_point(p),
                    t,
                    update,
                    iterations: options.fp_max_iter,
                });
            }
            y
        };
        let is_left_limit =
            left_states.len() < n_imp && p == mesh.left_point(left_states.len() + 1);
        if is_left_limit {
            left_states.push(y.clone());
            left_sum = Some(integral);
        }
        states.push(y);
    }
    PiecewiseTrajectory::from_states(mesh, states)
}

/// Residuals `‖(y(τ_i^+) − y(τ_i^-)) − [g(τ_i, lists_i) − g(τ_i, lists_{i−1})]‖` for `i = 1..N`.
pub fn jump_residual(
    problem: &dyn ImpulsiveProblem,
    schedule: &ImpulseSchedule,
    controls: &ControlVector,
    trajectory: &PiecewiseTrajectory,
) -> Vec<f64> {
    let left = trajectory.left_limits();
    (1..=schedule.len())
        .map(|i| {
            let t = schedule.boundary(i);
            let after = problem.jump(t, &history(schedule, controls, &left, i));
            let before = problem.jump(t, &history(schedule, controls, &left, i - 1));
            let observed = trajectory.right_limit(i) - trajectory.left_limit(i);
            (observed - (after - before)).norm()
        })
        .collect()
}

/// `J = Σ_i ∫_{τ_i}^{τ_{i+1}} F(t, y, a_i) dt + G(τ, y(τ_1^-), …, y(τ_{N+1}^-), a)` by the trapezoid rule.
pub fn evaluate_cost(
    problem: &dyn ImpulsiveProblem,
    schedule: &ImpulseSchedule,
    controls: &ControlVector,
    trajectory: &PiecewiseTrajectory,
    mesh: &Mesh,
) -> f64 {
    let running: f64 = (0..mesh.point_count())
        .map(|p| {
            mesh.weight(p)
                * problem.running_cost(
                    mesh.time(p),
                    trajectory.at(p),
                    controls.level(mesh.interval(p)),
                )
        })
        .sum();
    let left = trajectory.left_limits();
    running + problem.terminal_cost(&terminal_history(schedule, controls, &left))
}

/// Builds the uniform mesh, solves, and returns `J`.
pub fn solve_cost(
    problem: &dyn ImpulsiveProblem,
    schedule: &ImpulseSchedule,
    controls: &ControlVector,
    points_per_interval: usize,
    options: &SolveOptions,
) -> Result<f64> {
    let mesh = build_mesh(schedule, points_per_interval)?;
    let trajectory = solve_state(problem, schedule, controls, &mesh, options)?;
    Ok(evaluate_cost(
        problem,
        schedule,
        controls,
        &trajectory,
        &mesh,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::builtin;
    use crate::testing::Toy;
    use std::collections::BTreeMap;

    fn run(
        problem: &dyn ImpulsiveProblem,
        times: Vec<f64>,
        levels: &[f64],
        m: usize,
    ) -> (Mesh, PiecewiseTrajectory) {
        let schedule = ImpulseSchedule::new(times, 1.0, 0.01).unwrap();
        let controls = ControlVector::from_scalars(levels).unwrap();
        let mesh = build_mesh(&schedule, m).unwrap();
        let y = solve_state(
            problem,
            &schedule,
            &controls,
            &mesh,
            &SolveOptions::default(),
        )
        .unwrap();
        (mesh, y)
    }

    #[test]
    fn linear_growth_matches_exponential() {
        let b = builtin("P-LIN", &BTreeMap::new()).unwrap();
        let errors: Vec<f64> = [100, 200, 400]
            .iter()
            .map(|&m| {
                let mesh = build_mesh(&b.schedule, m).unwrap();
                let y = solve_state(
                    b.problem.as_ref(),
                    &b.schedule,
                    &b.controls,
                    &mesh,
                    &SolveOptions::default(),
                )
                .unwrap();
                (y.states().last().unwrap()[0] - 0.5_f64.exp()).abs()
            })
            .collect();
        assert!(errors[1] < 1e-4);
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn counting_jumps_are_piecewise_constant() {
        let b = builtin("P-JUMP", &BTreeMap::new()).unwrap();
        let mesh = build_mesh(&b.schedule, 10).unwrap();
        let y = solve_state(
            b.problem.as_ref(),
            &b.schedule,
            &b.controls,
            &mesh,
            &SolveOptions::default(),
        )
        .unwrap();
        for p in 0..mesh.point_count() {
            assert_eq!(y.at(p)[0], mesh.interval(p) as f64);
        }
        assert_eq!(y.left_limit(1)[0], 0.0);
        assert_eq!(y.right_limit(1)[0], 1.0);
        let residual = jump_residual(b.problem.as_ref(), &b.schedule, &b.controls, &y);
        assert_eq!(residual.len(), 2);
        assert!(residual.iter().all(|r| *r < 1e-14));
    }

    #[test]
    fn without_dynamics_the_forcing_is_returned() {
        let toy = Toy {
            initial: 0.7,
            ..Toy::default()
        };
        let (_, y) = run(&toy, vec![0.4], &[1.0, 2.0], 8);
        assert!(y.states().iter().all(|v| v[0] == 0.7));
    }

    #[test]
    fn no_impulses_means_no_jump_residuals() {
        let b = builtin("P-LIN", &BTreeMap::new()).unwrap();
        let mesh = build_mesh(&b.schedule, 10).unwrap();
        let y = solve_state(
            b.problem.as_ref(),
            &b.schedule,
            &b.controls,
            &mesh,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(jump_residual(b.problem.as_ref(), &b.schedule, &b.controls, &y).is_empty());
    }

    #[test]
    fn coupled_jumps_satisfy_the_jump_identity() {
        let toy = Toy {
            rate: 0.8,
            drift: 0.1,
            initial: 1.0,
            step: 0.3,
            coupling: -0.4,
            ..Toy::default()
        };
        let schedule = ImpulseSchedule::new(vec![0.25, 0.6], 1.0, 0.01).unwrap();
        let controls = ControlVector::from_scalars(&[0.0, 0.0, 0.0]).unwrap();
        let mesh = build_mesh(&schedule, 40).unwrap();
        let y = solve_state(&toy, &schedule, &controls, &mesh, &SolveOptions::default()).unwrap();
        for r in jump_residual(&toy, &schedule, &controls, &y) {
            assert!(r < 1e-12);
        }
    }

    #[test]
    fn cost_of_constants_is_exact() {
        let zero = Toy::default();
        let (mesh, y) = run(&zero, vec![0.3, 0.7], &[0.0; 3], 7);
        let schedule = ImpulseSchedule::new(vec![0.3, 0.7], 1.0, 0.01).unwrap();
        let controls = ControlVector::from_scalars(&[0.0; 3]).unwrap();
        assert_eq!(evaluate_cost(&zero, &schedule, &controls, &y, &mesh), 0.0);
        let one = Toy {
            constant: 1.0,
            ..Toy::default()
        };
        let j = evaluate_cost(&one, &schedule, &controls, &y, &mesh);
        assert!((j - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_cost_matches_integral() {
        let b = builtin("P-LIN", &BTreeMap::new()).unwrap();
        let j = solve_cost(
            b.problem.as_ref(),
            &b.schedule,
            &b.controls,
            200,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!((j - (1.0_f64.exp() - 1.0)).abs() < 1e-4);
    }

    #[test]
    fn mismatched_controls_are_rejected() {
        let toy = Toy::default();
        let schedule = ImpulseSchedule::new(vec![0.5], 1.0, 0.01).unwrap();
        let controls = ControlVector::from_scalars(&[0.0]).unwrap();
        let mesh = build_mesh(&schedule, 4).unwrap();
        assert!(matches!(
            solve_state(&toy, &schedule, &controls, &mesh, &SolveOptions::default()),
            Err(Error::Dimension(_))
        ));
    }
}
