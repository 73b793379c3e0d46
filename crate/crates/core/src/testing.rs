//! Scalar test problem with every ingredient switchable, shared by unit tests.

use crate::problem::{CostFunctional, ImpulseHistory, ImpulsiveProblem};
use crate::{Matrix, Vector};

/// `y = y0 + ∫ (k y + b a + c) ds + Σ_{τ_i < t} (s + λ y(τ_i^-))` with
/// `F = w_y y² + w_a a² + w_0` on `[0, 1]`.
#[derive(Debug, Clone, Default)]
pub(crate) struct Toy {
    pub rate: f64,
    pub gain: f64,
    pub drift: f64,
    pub initial: f64,
    pub step: f64,
    pub coupling: f64,
    pub state_weight: f64,
    pub level_weight: f64,
    pub constant: f64,
}

fn s(v: f64) -> Vector {
    Vector::from_element(1, v)
}

fn sm(v: f64) -> Matrix {
    Matrix::from_element(1, 1, v)
}

impl CostFunctional for Toy {
    fn running_cost(&self, _t: f64, y: &Vector, a: &Vector) -> f64 {
        self.state_weight * y[0] * y[0] + self.level_weight * a[0] * a[0] + self.constant
    }
    fn running_cost_dy(&self, _t: f64, y: &Vector, _a: &Vector) -> Vector {
        s(2.0 * self.state_weight * y[0])
    }
    fn running_cost_da(&self, _t: f64, _y: &Vector, a: &Vector) -> Vector {
        s(2.0 * self.level_weight * a[0])
    }
}

impl ImpulsiveProblem for Toy {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> f64 {
        1.0
    }
    fn forcing(&self, _t: f64) -> Vector {
        s(self.initial)
    }
    fn forcing_rate(&self, _t: f64) -> Vector {
        s(0.0)
    }
    fn kernel(&self, _t: f64, _s: f64, y: &Vector, a: &Vector) -> Vector {
        s(self.rate * y[0] + self.gain * a[0] + self.drift)
    }
    fn kernel_dy(&self, _t: f64, _s: f64, _y: &Vector, _a: &Vector) -> Matrix {
        sm(self.rate)
    }
    fn kernel_da(&self, _t: f64, _s: f64, _y: &Vector, _a: &Vector) -> Matrix {
        sm(self.gain)
    }
    fn kernel_dt(&self, _t: f64, _s: f64, _y: &Vector, _a: &Vector) -> Vector {
        s(0.0)
    }
    fn jump(&self, _t: f64, h: &ImpulseHistory) -> Vector {
        s((1..=h.impulse_count())
            .map(|i| self.step + self.coupling * h.state(i)[0])
            .sum())
    }
    fn jump_dy(&self, _t: f64, _h: &ImpulseHistory, _j: usize) -> Matrix {
        sm(self.coupling)
    }
}
