//! Built-in problems, selectable by name and parametrized by a flat map of
//! numeric overrides.
//!
//! | name             | summary                                                        |
//! |------------------|----------------------------------------------------------------|
//! | `P-LIN`          | `y = 1 + ∫ k y`, no impulses, `F = y²`                         |
//! | `P-JUMP`         | `f ≡ 0`, `g` counts past impulses, `F = y²`                    |
//! | `P-COUPLED`      | scalar `f = k y + a`, `g = c Σ y(τ_i^-)`                       |
//! | `P-FULL`         | two-state nonlinear fading-memory system, one impulse          |
//! | `P-COUPLED-FULL` | same dynamics with two impulses                               |
//! | `P-ODE`          | damped nonlinear oscillator with replacement jumps, two impulses |

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{dmatrix, dvector};

use crate::ode::{JumpConvention, LiftedOde, OdeProblem};
use crate::problem::{ControlBox, CostFunctional, ImpulseHistory, ImpulsiveProblem};
use crate::schedule::{ControlVector, ImpulseSchedule};
use crate::{Error, Matrix, Result, Vector};

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 6] = [
    "P-LIN",
    "P-JUMP",
    "P-COUPLED",
    "P-FULL",
    "P-COUPLED-FULL",
    "P-ODE",
];

/// A named problem with its default starting point.
#[derive(Clone)]
pub struct Builtin {
    pub name: String,
    pub problem: Arc<dyn ImpulsiveProblem>,
    /// The ODE form, for problems built from one.
    pub ode: Option<Arc<dyn OdeProblem>>,
    pub schedule: ImpulseSchedule,
    pub controls: ControlVector,
    pub parameters: BTreeMap<String, f64>,
}

fn take(
    params: &mut BTreeMap<String, f64>,
    overrides: &BTreeMap<String, f64>,
    key: &str,
    default: f64,
) -> f64 {
    let v = overrides.get(key).copied().unwrap_or(default);
    params.insert(key.to_string(), v);
    v
}

/// Problem, optional ODE form, default instants, default levels and horizon.
type Parts = (
    Arc<dyn ImpulsiveProblem>,
    Option<Arc<dyn OdeProblem>>,
    Vec<f64>,
    Vec<f64>,
    f64,
);

/// Builds a built-in problem; unknown names and unknown parameters are rejected.
pub fn builtin(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Builtin> {
    let mut params = BTreeMap::new();
    let p = &mut params;
    let (problem, ode, times, levels, horizon): Parts = match name {
        "P-LIN" => {
            let prob = LinearProblem {
                rate: take(p, overrides, "k", 0.5),
                initial: take(p, overrides, "y0", 1.0),
                horizon: take(p, overrides, "T", 1.0),
            };
            let t = prob.horizon;
            (Arc::new(prob), None, vec![], vec![0.0], t)
        }
        "P-JUMP" => {
            let prob = CountingJumpProblem {
                step: take(p, overrides, "step", 1.0),
            };
            (Arc::new(prob), None, vec![0.3, 0.7], vec![0.0; 3], 1.0)
        }
        "P-COUPLED" => {
            let prob = CoupledProblem {
                rate: take(p, overrides, "k", 1.0),
                coupling: take(p, overrides, "c", 0.5),
            };
            (
                Arc::new(prob),
                None,
                vec![0.3, 0.7],
                vec![0.2, -0.1, 0.3],
                1.0,
            )
        }
        "P-FULL" | "P-COUPLED-FULL" => {
            let mut prob = FullProblem::new(
                take(p, overrides, "memory", 0.8),
                take(p, overrides, "fade", 0.5),
                take(p, overrides, "coupling", 1.0),
            );
            prob.reference = take(p, overrides, "reference", 1.0);
            prob.control_weight = take(p, overrides, "control_weight", 1.0);
            prob.control_target = take(p, overrides, "control_target", 0.5);
            if name == "P-FULL" {
                (Arc::new(prob), None, vec![0.4], vec![0.5, 0.5], 1.0)
            } else {
                (
                    Arc::new(prob),
                    None,
                    vec![0.3, 0.7],
                    vec![0.5, 0.3, 0.6],
                    1.0,
                )
            }
        }
        "P-ODE" => {
            let ode: Arc<dyn OdeProblem> = Arc::new(OscillatorOde {
                damping: take(p, overrides, "damping", 0.2),
                tau_weight: take(p, overrides, "tau_weight", 1.0),
                convention: JumpConvention::Replacement,
            });
            (
                Arc::new(LiftedOde::new(ode.clone())),
                Some(ode),
                vec![0.35, 0.7],
                vec![0.2, -0.1, 0.3],
                1.0,
            )
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown problem {other:?}; expected one of {}",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    if let Some(unknown) = overrides.keys().find(|k| !params.contains_key(*k)) {
        let known: Vec<&str> = params.keys().map(String::as_str).collect();
        return Err(Error::InvalidArgument(format!(
            "unknown parameter {unknown:?} for {name}; known: [{}]",
            known.join(", ")
        )));
    }
    let controls = ControlVector::from_flat(&levels, problem.control_dim())?;
    let schedule = ImpulseSchedule::with_default_gap(times, horizon)?;
    Ok(Builtin {
        name: name.to_string(),
        problem,
        ode,
        schedule,
        controls,
        parameters: params,
    })
}

fn scalar(v: f64) -> Vector {
    Vector::from_element(1, v)
}

fn scalar_matrix(v: f64) -> Matrix {
    Matrix::from_element(1, 1, v)
}

/// `y(t) = y0 + ∫_0^t k y(s) ds`, `F = y²`.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub rate: f64,
    pub initial: f64,
    pub horizon: f64,
}

impl CostFunctional for LinearProblem {
    fn running_cost(&self, _t: f64, y: &Vector, _a: &Vector) -> f64 {
        y[0] * y[0]
    }
    fn running_cost_dy(&self, _t: f64, y: &Vector, _a: &Vector) -> Vector {
        scalar(2.0 * y[0])
    }
    fn running_cost_da(&self, _t: f64, _y: &Vector, _a: &Vector) -> Vector {
        scalar(0.0)
    }
}

impl ImpulsiveProblem for LinearProblem {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn forcing(&self, _t: f64) -> Vector {
        scalar(self.initial)
    }
    fn forcing_rate(&self, _t: f64) -> Vector {
        scalar(0.0)
    }
    fn kernel(&self, _t: f64, _s: f64, y: &Vector, _a: &Vector) -> Vector {
        y * self.rate
    }
    fn kernel_dy(&self, _t: f64, _s: f64, _y: &Vector, _a: &Vector) -> Matrix {
        scalar_matrix(self.rate)
    }
    fn kernel_da(&self, _t: f64, _s: f64, _y: &Vector, _a: &Vector) -> Matrix {
        scalar_matrix(0.0)
    }
    fn kernel_dt(&self, _t: f64, _s: f64, _y: &Vector, _a: &Vector) -> Vector {
        scalar(0.0)
    }
}

/// `f ≡ 0`, `y0 ≡ 0`, `g(t) = step · #{i : τ_i < t}`, `F = y²`.
#[derive(Debug, Clone)]
pub struct CountingJumpProblem {
    pub step: f64,
}

impl CostFunctional for CountingJumpProblem {
    fn running_cost(&self, _t: f64, y: &Vector, _a: &Vector) -> f64 {
        y[0] * y[0]
    }
    fn running_cost_dy(&self, _t: f64, y: &Vector, _a: &Vector) -> Vector {
        scalar(2.0 * y[0])
    }
    fn running_cost_da(&self, _t: f64, _y: &Vector, _a: &Vector) -> Vector {
        scalar(0.0)
    }
}

impl ImpulsiveProblem for CountingJumpProblem {
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
        scalar(0.0)
    }
    fn forcing_rate(&self, _t: f64) -> Vector {
        scalar(0.0)
    }
    fn kernel(&self, _t: f64, _s: f64, _y: &Vector, _a: &Vector) -> Vector {
        scalar(0.0)
    }
    fn kernel_dy(&self, _t: f64, _s: f64, _y: &Vector, _a: &Vector) -> Matrix {
        scalar_matrix(0.0)
    }
    fn kernel_da(&self, _t: f64, _s: f64, _y: &Vector, _a: &Vector) -> Matrix {
        scalar_matrix(0.0)
    }
    fn kernel_dt(&self, _t: f64, _s: f64, _y: &Vector, _a: &Vector) -> Vector {
        scalar(0.0)
    }
    fn jump(&self, _t: f64, h: &ImpulseHistory) -> Vector {
        scalar(self.step * h.impulse_count() as f64)
    }
}

/// `y = 1 + ∫ (k y + a) + c Σ_{τ_i < t} y(τ_i^-)`, `F = y² + a²`, `G = y(T^-)²`.
#[derive(Debug, Clone)]
pub struct CoupledProblem {
    pub rate: f64,
    pub coupling: f64,
}

impl CostFunctional for CoupledProblem {
    fn running_cost(&self, _t: f64, y: &Vector, a: &Vector) -> f64 {
        y[0] * y[0] + a[0] * a[0]
    }
    fn running_cost_dy(&self, _t: f64, y: &Vector, _a: &Vector) -> Vector {
        scalar(2.0 * y[0])
    }
    fn running_cost_da(&self, _t: f64, _y: &Vector, a: &Vector) -> Vector {
        scalar(2.0 * a[0])
    }
    fn terminal_cost(&self, h: &ImpulseHistory) -> f64 {
        let y = h.states.last().map_or(0.0, |v| v[0]);
        y * y
    }
    fn terminal_cost_dy(&self, h: &ImpulseHistory, j: usize) -> Vector {
        if j == h.states.len() {
            scalar(2.0 * h.state(j)[0])
        } else {
            scalar(0.0)
        }
    }
}

impl ImpulsiveProblem for CoupledProblem {
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
        scalar(1.0)
    }
    fn forcing_rate(&self, _t: f64) -> Vector {
        scalar(0.0)
    }
    fn kernel(&self, _t: f64, _s: f64, y: &Vector, a: &Vector) -> Vector {
        scalar(self.rate * y[0] + a[0])
    }
    fn kernel_dy(&self, _t: f64, _s: f64, _y: &Vector, _a: &Vector) -> Matrix {
        scalar_matrix(self.rate)
    }
    fn kernel_da(&self, _t: f64, _s: f64, _y: &Vector, _a: &Vector) -> Matrix {
        scalar_matrix(1.0)
    }
    fn kernel_dt(&self, _t: f64, _s: f64, _y: &Vector, _a: &Vector) -> Vector {
        scalar(0.0)
    }
    fn jump(&self, _t: f64, h: &ImpulseHistory) -> Vector {
        scalar(self.coupling * h.states.iter().map(|y| y[0]).sum::<f64>())
    }
    fn jump_dy(&self, _t: f64, _h: &ImpulseHistory, _j: usize) -> Matrix {
        scalar_matrix(self.coupling)
    }
}

/// Two-state system with fading memory and decaying impulse effects:
///
/// ```text
/// f(t, s, y, a) = e^{−β(t−s)} (A y + σ sin(y₁) e₁ + b a)
/// g(t, …)       = Σ_{τ_i < t} e^{−γ(t−τ_i)} (κ B y(τ_i^-) + d a_i + e)
/// y0(t)         = (0.3, ½ cos t)
/// F(t, y, a)    = (y₁ − r)² + ½ y₂² + ½ ϱ (a − ā)²
/// G(τ, y, a)    = ½ |y(T^-)|² + ¼ |y(τ_1^-)|² + 2 Σ_j (τ_j − c_j)²
/// ```
///
/// Controls live in the box `[0, 1]`.
#[derive(Debug, Clone)]
pub struct FullProblem {
    pub memory: f64,
    pub fade: f64,
    pub coupling: f64,
    a: Matrix,
    sine: f64,
    b: Vector,
    jump_b: Matrix,
    jump_d: Vector,
    jump_e: Vector,
    pub reference: f64,
    pub control_weight: f64,
    pub control_target: f64,
}

impl FullProblem {
    pub fn new(memory: f64, fade: f64, coupling: f64) -> Self {
        Self {
            memory,
            fade,
            coupling,
            a: dmatrix![-0.5, 0.3; -0.4, -0.3],
            sine: 0.2,
            b: dvector![0.8, 0.2],
            jump_b: dmatrix![0.3, 0.1; -0.1, 0.2],
            jump_d: dvector![0.4, -0.2],
            jump_e: dvector![-0.3, 0.2],
            reference: 1.0,
            control_weight: 1.0,
            control_target: 0.5,
        }
    }

    fn fading(&self, t: f64, s: f64) -> f64 {
        (-self.memory * (t - s)).exp()
    }

    fn inner(&self, y: &Vector, a: &Vector) -> Vector {
        let mut v = &self.a * y + &self.b * a[0];
        v[0] += self.sine * y[0].sin();
        v
    }

    fn impulse_term(&self, h: &ImpulseHistory, i: usize) -> Vector {
        &self.jump_b * h.state(i) * self.coupling + &self.jump_d * h.level(i)[0] + &self.jump_e
    }

    fn tau_target(j: usize) -> f64 {
        0.2 + 0.3 * j as f64
    }
}

impl CostFunctional for FullProblem {
    fn running_cost(&self, _t: f64, y: &Vector, a: &Vector) -> f64 {
        let e = y[0] - self.reference;
        let u = a[0] - self.control_target;
        e * e + 0.5 * y[1] * y[1] + 0.5 * self.control_weight * u * u
    }
    fn running_cost_dy(&self, _t: f64, y: &Vector, _a: &Vector) -> Vector {
        dvector![2.0 * (y[0] - self.reference), y[1]]
    }
    fn running_cost_da(&self, _t: f64, _y: &Vector, a: &Vector) -> Vector {
        scalar(self.control_weight * (a[0] - self.control_target))
    }
    fn terminal_cost(&self, h: &ImpulseHistory) -> f64 {
        let last = h.states.last().expect("terminal state");
        let mut g = 0.5 * last.norm_squared();
        if h.impulse_count() > 0 {
            g += 0.25 * h.state(1).norm_squared();
        }
        for j in 1..=h.impulse_count() {
            let d = h.tau(j) - Self::tau_target(j);
            g += 2.0 * d * d;
        }
        g
    }
    fn terminal_cost_dtau(&self, h: &ImpulseHistory, j: usize) -> f64 {
        4.0 * (h.tau(j) - Self::tau_target(j))
    }
    fn terminal_cost_dy(&self, h: &ImpulseHistory, j: usize) -> Vector {
        let mut g = Vector::zeros(2);
        if j == h.states.len() {
            g += h.state(j);
        }
        if j == 1 && h.impulse_count() > 0 {
            g += 0.5 * h.state(1);
        }
        g
    }
}

impl ImpulsiveProblem for FullProblem {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> f64 {
        1.0
    }
    fn control_box(&self, _level: usize) -> ControlBox {
        ControlBox::uniform(1, 0.0, 1.0)
    }
    fn forcing(&self, t: f64) -> Vector {
        dvector![0.3, 0.5 * t.cos()]
    }
    fn forcing_rate(&self, t: f64) -> Vector {
        dvector![0.0, -0.5 * t.sin()]
    }
    fn kernel(&self, t: f64, s: f64, y: &Vector, a: &Vector) -> Vector {
        self.inner(y, a) * self.fading(t, s)
    }
    fn kernel_dy(&self, t: f64, s: f64, y: &Vector, _a: &Vector) -> Matrix {
        let mut m = self.a.clone();
        m[(0, 0)] += self.sine * y[0].cos();
        m * self.fading(t, s)
    }
    fn kernel_da(&self, t: f64, s: f64, _y: &Vector, _a: &Vector) -> Matrix {
        Matrix::from_column_slice(2, 1, self.b.as_slice()) * self.fading(t, s)
    }
    fn kernel_dt(&self, t: f64, s: f64, y: &Vector, a: &Vector) -> Vector {
        self.inner(y, a) * (-self.memory * self.fading(t, s))
    }
    fn jump(&self, t: f64, h: &ImpulseHistory) -> Vector {
        let mut g = Vector::zeros(2);
        for i in 1..=h.impulse_count() {
            g += self.impulse_term(h, i) * (-self.fade * (t - h.tau(i))).exp();
        }
        g
    }
    fn jump_dt(&self, t: f64, h: &ImpulseHistory) -> Vector {
        self.jump(t, h) * -self.fade
    }
    fn jump_dtau(&self, t: f64, h: &ImpulseHistory, j: usize) -> Vector {
        self.impulse_term(h, j) * (self.fade * (-self.fade * (t - h.tau(j))).exp())
    }
    fn jump_dy(&self, t: f64, h: &ImpulseHistory, j: usize) -> Matrix {
        &self.jump_b * (self.coupling * (-self.fade * (t - h.tau(j))).exp())
    }
    fn jump_da(&self, t: f64, h: &ImpulseHistory, i: usize) -> Matrix {
        if i == 0 {
            return Matrix::zeros(2, 1);
        }
        Matrix::from_column_slice(2, 1, self.jump_d.as_slice())
            * (-self.fade * (t - h.tau(i))).exp()
    }
}

/// Damped nonlinear oscillator driven by the control, with jump map
/// `I(τ, y, a) = (0.8 y₁ + 0.2 a, y₂ + 0.3 y₁ (1 − τ))`.
///
/// `F = y₁² + 0.1 y₂² + 0.1 a²`, `G = ½ |y(T^-)|² + w Σ_j (τ_j − 0.35 j)²`, `y(0) = (1, 0)`.
#[derive(Debug, Clone)]
pub struct OscillatorOde {
    pub damping: f64,
    pub tau_weight: f64,
    pub convention: JumpConvention,
}

impl CostFunctional for OscillatorOde {
    fn running_cost(&self, _t: f64, y: &Vector, a: &Vector) -> f64 {
        y[0] * y[0] + 0.1 * y[1] * y[1] + 0.1 * a[0] * a[0]
    }
    fn running_cost_dy(&self, _t: f64, y: &Vector, _a: &Vector) -> Vector {
        dvector![2.0 * y[0], 0.2 * y[1]]
    }
    fn running_cost_da(&self, _t: f64, _y: &Vector, a: &Vector) -> Vector {
        scalar(0.2 * a[0])
    }
    fn terminal_cost(&self, h: &ImpulseHistory) -> f64 {
        let mut g = 0.5 * h.states.last().expect("terminal state").norm_squared();
        for j in 1..=h.impulse_count() {
            let d = h.tau(j) - 0.35 * j as f64;
            g += self.tau_weight * d * d;
        }
        g
    }
    fn terminal_cost_dtau(&self, h: &ImpulseHistory, j: usize) -> f64 {
        2.0 * self.tau_weight * (h.tau(j) - 0.35 * j as f64)
    }
    fn terminal_cost_dy(&self, h: &ImpulseHistory, j: usize) -> Vector {
        if j == h.states.len() {
            h.state(j).clone()
        } else {
            Vector::zeros(2)
        }
    }
}

impl OdeProblem for OscillatorOde {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> f64 {
        1.0
    }
    fn initial_state(&self) -> Vector {
        dvector![1.0, 0.0]
    }
    fn convention(&self) -> JumpConvention {
        self.convention
    }
    fn control_box(&self, _level: usize) -> ControlBox {
        ControlBox::uniform(1, -1.0, 1.0)
    }
    fn rhs(&self, _t: f64, y: &Vector, a: &Vector) -> Vector {
        dvector![
            y[1],
            -0.5 * y[0] - self.damping * y[1] + a[0] + 0.3 * y[0].sin()
        ]
    }
    fn rhs_dy(&self, _t: f64, y: &Vector, _a: &Vector) -> Matrix {
        dmatrix![0.0, 1.0; -0.5 + 0.3 * y[0].cos(), -self.damping]
    }
    fn rhs_da(&self, _t: f64, _y: &Vector, _a: &Vector) -> Matrix {
        dmatrix![0.0; 1.0]
    }
    fn jump_map(&self, tau: f64, y: &Vector, a: &Vector) -> Vector {
        dvector![0.8 * y[0] + 0.2 * a[0], y[1] + 0.3 * y[0] * (1.0 - tau)]
    }
    fn jump_map_dtau(&self, _tau: f64, y: &Vector, _a: &Vector) -> Vector {
        dvector![0.0, -0.3 * y[0]]
    }
    fn jump_map_dy(&self, tau: f64, _y: &Vector, _a: &Vector) -> Matrix {
        dmatrix![0.8, 0.0; 0.3 * (1.0 - tau), 1.0]
    }
    fn jump_map_da(&self, _tau: f64, _y: &Vector, _a: &Vector) -> Matrix {
        dmatrix![0.2; 0.0]
    }
}
