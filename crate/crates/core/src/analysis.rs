//! A solved trajectory bundled with its linearization, shared by the
//! variation, gradient and ODE modules.

use crate::linear::LinearSystem;
use crate::mesh::Mesh;
use crate::problem::{ImpulseHistory, ImpulsiveProblem};
use crate::schedule::{ControlVector, ImpulseSchedule};
use crate::state::{
    evaluate_cost, history, solve_state, terminal_history, PiecewiseTrajectory, SolveOptions,
};
use crate::{Result, Vector};

pub struct Analysis<'a> {
    pub problem: &'a dyn ImpulsiveProblem,
    pub schedule: &'a ImpulseSchedule,
    pub controls: &'a ControlVector,
    pub mesh: Mesh,
    pub trajectory: PiecewiseTrajectory,
    pub system: LinearSystem,
    pub cost: f64,
    left: Vec<Vector>,
}

impl<'a> Analysis<'a> {
    /// Solves the state equation on `mesh` and linearizes around the solution.
    pub fn new(
        problem: &'a dyn ImpulsiveProblem,
        schedule: &'a ImpulseSchedule,
        controls: &'a ControlVector,
        mesh: Mesh,
        options: &SolveOptions,
    ) -> Result<Self> {
        let trajectory = solve_state(problem, schedule, controls, &mesh, options)?;
        Self::from_trajectory(problem, schedule, controls, mesh, trajectory)
    }

    pub fn from_trajectory(
        problem: &'a dyn ImpulsiveProblem,
        schedule: &'a ImpulseSchedule,
        controls: &'a ControlVector,
        mesh: Mesh,
        trajectory: PiecewiseTrajectory,
    ) -> Result<Self> {
        let system = LinearSystem::linearize(problem, schedule, controls, &mesh, &trajectory)?;
        let cost = evaluate_cost(problem, schedule, controls, &trajectory, &mesh);
        let left = trajectory.left_limits();
        Ok(Self {
            problem,
            schedule,
            controls,
            mesh,
            trajectory,
            system,
            cost,
            left,
        })
    }

    pub fn impulse_count(&self) -> usize {
        self.schedule.len()
    }

    /// `y(τ_i^-)` for `i ∈ 1..=N+1`.
    pub fn left_states(&self) -> &[Vector] {
        &self.left
    }

    /// Lists handed to `g` inside interval `interval`.
    pub fn history(&self, interval: usize) -> ImpulseHistory<'_> {
        history(self.schedule, self.controls, &self.left, interval)
    }

    /// Lists handed to `G`.
    pub fn terminal_history(&self) -> ImpulseHistory<'_> {
        terminal_history(self.schedule, self.controls, &self.left)
    }

    /// Control level active at grid point `p`.
    pub fn level_at(&self, p: usize) -> &Vector {
        self.controls.level(self.mesh.interval(p))
    }

    /// `F_y(t_p, y_p, u_p)` at every grid point.
    pub fn running_cost_dy(&self) -> Vec<Vector> {
        (0..self.mesh.point_count())
            .map(|p| {
                self.problem.running_cost_dy(
                    self.mesh.time(p),
                    self.trajectory.at(p),
                    self.level_at(p),
                )
            })
            .collect()
    }
}
