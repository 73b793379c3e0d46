//! Controlled impulsive Volterra integral equations with variable impulse
//! instants.
//!
//! The crate solves state equations of the form
//!
//! ```text
//! y(t) = y0(t) + ∫_0^t f(t, s, y(s), u(s)) ds + g(t, τ_(t), y_(t), a_(t))
//! ```
//!
//! where `u` is piecewise constant between the impulse instants `τ_1 < … < τ_N`
//! and `g` aggregates the jumps applied so far. On top of the solver it builds
//! the linear impulsive machinery (coupling arrays, lifted kernel, discrete
//! resolvent, adjoint), the first-order variations with respect to the impulse
//! instants, co-state based gradients of the cost with respect to both the
//! instants and the control levels, a specialization for impulsive ODEs, and a
//! projected-gradient optimizer with finite-difference and grid-search oracles.
//!
//! Everything is discretized on a [`Mesh`] whose nodes contain every impulse
//! instant. Internally each impulse node carries two grid points (left and
//! right limit) joined by a zero-length segment, so one-sided limits and the
//! trapezoid rule compose without special cases.

#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod blocks;
pub mod error;
pub mod gradient;
pub mod linear;
pub mod mesh;
pub mod ode;
pub mod optimize;
pub mod oracle;
pub mod problem;
pub mod problems;
pub mod schedule;
pub mod state;
pub mod variation;

#[cfg(test)]
pub(crate) mod testing;

pub use error::{Error, Result};
pub use mesh::{build_mesh, Mesh};
pub use problem::{ControlBox, CostFunctional, ImpulseHistory, ImpulsiveProblem};
pub use schedule::{control_at, validate_schedule, ControlVector, ImpulseSchedule, Side};
pub use state::{evaluate_cost, jump_residual, solve_state, PiecewiseTrajectory, SolveOptions};

/// Column vector used for states, controls and row-vector co-states alike.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for Jacobians and kernel blocks.
pub type Matrix = nalgebra::DMatrix<f64>;
