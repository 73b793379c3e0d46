//! Problem data: dynamics, impulse aggregate, cost and admissible control boxes.
//!
//! Impulse indices (`τ_j`, left limits `y_j`) are 1-based; control levels
//! `a_i` are 0-based, matching `u(t) = a_i` on `(τ_i, τ_{i+1})`.

use crate::{Matrix, Vector};

/// Argument lists of the impulse aggregate `g` at a time `t`.
///
/// Inside interval `I` (`τ_I < t < τ_{I+1}`) the lists are `τ_1..τ_I`,
/// `y(τ_1^-)..y(τ_I^-)` and `a_0..a_I`. The terminal cost receives the full
/// lists with the extra left limit `y(T^-)`.
#[derive(Debug, Clone, Copy)]
pub struct ImpulseHistory<'a> {
    pub taus: &'a [f64],
    pub states: &'a [Vector],
    pub levels: &'a [Vector],
}

impl ImpulseHistory<'_> {
    /// `τ_j`, 1-based.
    pub fn tau(&self, j: usize) -> f64 {
        self.taus[j - 1]
    }

    /// `y(τ_j^-)`, 1-based.
    pub fn state(&self, j: usize) -> &Vector {
        &self.states[j - 1]
    }

    /// `a_i`, 0-based.
    pub fn level(&self, i: usize) -> &Vector {
        &self.levels[i]
    }

    pub fn impulse_count(&self) -> usize {
        self.taus.len()
    }
}

/// Axis-aligned admissible set for one control level.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBox {
    pub lower: Vector,
    pub upper: Vector,
}

impl ControlBox {
    pub fn new(lower: Vector, upper: Vector) -> Self {
        Self { lower, upper }
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Self {
        Self::new(
            Vector::from_element(dim, lower),
            Vector::from_element(dim, upper),
        )
    }

    pub fn unbounded(dim: usize) -> Self {
        Self::uniform(dim, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn contains(&self, a: &Vector) -> bool {
        a.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(&v, (&lo, &hi))| lo <= v && v <= hi)
    }

    pub fn project(&self, a: &Vector) -> Vector {
        Vector::from_iterator(
            a.len(),
            a.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(&v, (&lo, &hi))| v.max(lo).min(hi)),
        )
    }
}

/// Running cost `F(t, y, a)` and terminal/impulse cost `G(τ, y, a)`.
///
/// The history passed to `G` holds `N` instants, the `N + 1` left limits
/// `y(τ_1^-)..y(τ_{N+1}^-)` with `τ_{N+1} = T`, and all `N + 1` levels.
pub trait CostFunctional: Send + Sync {
    fn running_cost(&self, t: f64, y: &Vector, a: &Vector) -> f64;
    fn running_cost_dy(&self, t: f64, y: &Vector, a: &Vector) -> Vector;
    fn running_cost_da(&self, t: f64, y: &Vector, a: &Vector) -> Vector;

    fn terminal_cost(&self, _h: &ImpulseHistory) -> f64 {
        0.0
    }
    fn terminal_cost_dtau(&self, _h: &ImpulseHistory, _j: usize) -> f64 {
        0.0
    }
    fn terminal_cost_dy(&self, h: &ImpulseHistory, _j: usize) -> Vector {
        Vector::zeros(h.states[0].len())
    }
    fn terminal_cost_da(&self, h: &ImpulseHistory, _i: usize) -> Vector {
        Vector::zeros(h.levels[0].len())
    }
}

/// A controlled impulsive Volterra problem
/// `y(t) = y0(t) + ∫_0^t f(t, s, y(s), u(s)) ds + g(t, τ_(t), y_(t), a_(t))`.
///
/// `kernel_dt` is the partial of `f` in its first time argument. The `jump*`
/// methods default to `g ≡ 0`; `g` must vanish when the history is empty.
pub trait ImpulsiveProblem: CostFunctional {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn horizon(&self) -> f64;

    fn control_box(&self, _level: usize) -> ControlBox {
        ControlBox::unbounded(self.control_dim())
    }

    fn forcing(&self, t: f64) -> Vector;
    fn forcing_rate(&self, t: f64) -> Vector;

    fn kernel(&self, t: f64, s: f64, y: &Vector, a: &Vector) -> Vector;
    fn kernel_dy(&self, t: f64, s: f64, y: &Vector, a: &Vector) -> Matrix;
    fn kernel_da(&self, t: f64, s: f64, y: &Vector, a: &Vector) -> Matrix;
    fn kernel_dt(&self, t: f64, s: f64, y: &Vector, a: &Vector) -> Vector;

    fn jump(&self, _t: f64, _h: &ImpulseHistory) -> Vector {
        Vector::zeros(self.state_dim())
    }
    fn jump_dt(&self, _t: f64, _h: &ImpulseHistory) -> Vector {
        Vector::zeros(self.state_dim())
    }
    /// Partial with respect to `τ_j`, `1 ≤ j ≤ h.impulse_count()`.
    fn jump_dtau(&self, _t: f64, _h: &ImpulseHistory, _j: usize) -> Vector {
        Vector::zeros(self.state_dim())
    }
    /// Partial with respect to `y(τ_j^-)`, `1 ≤ j ≤ h.impulse_count()`.
    fn jump_dy(&self, _t: f64, _h: &ImpulseHistory, _j: usize) -> Matrix {
        Matrix::zeros(self.state_dim(), self.state_dim())
    }
    /// Partial with respect to `a_i`, `0 ≤ i ≤ h.impulse_count()`.
    fn jump_da(&self, _t: f64, _h: &ImpulseHistory, _i: usize) -> Matrix {
        Matrix::zeros(self.state_dim(), self.control_dim())
    }
}
