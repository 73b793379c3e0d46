//! Projected-gradient optimization of the impulse instants and control levels.
//!
//! Each iteration evaluates the analytic gradients, projects a trial step onto
//! the feasible set (ordered instants with minimum gap, boxed levels) and
//! backtracks until the projected Armijo condition holds. The loop stops when
//! the instant gradient and the variational-inequality residual of the levels
//! both fall below tolerance.

use crate::gradient::{control_boxes, gradient_report, GradientReport};
use crate::problem::{ControlBox, ImpulsiveProblem};
use crate::schedule::{validate_schedule, ControlVector, ImpulseSchedule};
use crate::state::{solve_cost, SolveOptions};
use crate::{Error, Result};

/// Which variables a step updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    /// Instants and levels together, one shared line search.
    Joint,
    /// Instants and levels in turn; a block already below tolerance is skipped.
    Alternating,
}

#[derive(Debug, Clone)]
pub struct OptimizeOptions {
    pub max_iters: usize,
    pub initial_step: f64,
    pub shrink: f64,
    pub armijo: f64,
    pub max_shrinks: usize,
    pub tau_tol: f64,
    pub vi_tol: f64,
    /// Minimum gap `δ`; the initial schedule's gap when `None`.
    pub min_gap: Option<f64>,
    pub points_per_interval: usize,
    pub mode: StepMode,
    pub solve: SolveOptions,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
            max_shrinks: 60,
            tau_tol: 1e-4,
            vi_tol: 1e-4,
            min_gap: None,
            points_per_interval: 100,
            mode: StepMode::Joint,
            solve: SolveOptions::default(),
        }
    }
}

impl OptimizeOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_step", self.initial_step),
            ("armijo", self.armijo),
            ("tau_tol", self.tau_tol),
            ("vi_tol", self.vi_tol),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be positive, got {v}"
            )));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "shrink must lie in (0, 1), got {}",
                self.shrink
            )));
        }
        if self.max_iters == 0 || self.max_shrinks == 0 {
            return Err(Error::InvalidArgument(
                "max_iters and max_shrinks must be at least 1".into(),
            ));
        }
        if let Some(d) = self.min_gap {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "min_gap must be positive, got {d}"
                )));
            }
        }
        self.solve.validate()
    }
}

/// One iterate of the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub tau: Vec<f64>,
    /// Levels flattened level-major.
    pub levels: Vec<f64>,
    pub cost: f64,
    pub tau_residual: f64,
    pub vi_residual: f64,
    /// Step length that produced this iterate (zero for the initial point).
    pub step: f64,
    pub shrinks: usize,
    pub points_per_interval: usize,
}

#[derive(Debug, Clone)]
pub struct OptimizationTrace {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub schedule: ImpulseSchedule,
    pub controls: ControlVector,
    /// Gradient report at the returned point.
    pub report: GradientReport,
}

impl OptimizationTrace {
    pub fn final_record(&self) -> &IterationRecord {
        self.records
            .last()
            .expect("trace holds at least the initial point")
    }

    /// Whether the cost never increases between recorded iterates.
    pub fn is_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].cost <= w[0].cost)
    }
}

/// Isotonic (non-decreasing) least-squares fit by pool-adjacent-violators.
pub fn isotonic_regression(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (sum_b, n_b) = blocks[blocks.len() - 1];
            let (sum_a, n_a) = blocks[blocks.len() - 2];
            if sum_a / n_a as f64 <= sum_b / n_b as f64 {
                break;
            }
            blocks.pop();
            let last = blocks.len() - 1;
            blocks[last] = (sum_a + sum_b, n_a + n_b);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(sum, n)| std::iter::repeat_n(sum / n as f64, n))
        .collect()
}

/// Euclidean projection onto `{τ : τ_1 ≥ δ, τ_{i+1} − τ_i ≥ δ, τ_N ≤ T − δ}`.
///
/// With `σ_i = τ_i − iδ` the set becomes `0 ≤ σ_1 ≤ … ≤ σ_N ≤ T − (N+1)δ`,
/// whose projection is the isotonic fit clamped to the bounds. Feasible input
/// is returned unchanged.
pub fn project_schedule(candidate: &[f64], min_gap: f64, horizon: f64) -> Result<Vec<f64>> {
    let n = candidate.len();
    let required = (n as f64 + 1.0) * min_gap;
    if required > horizon {
        return Err(Error::InfeasibleProjection { required, horizon });
    }
    if validate_schedule(candidate, horizon, min_gap)?.is_empty() {
        return Ok(candidate.to_vec());
    }
    let shifted: Vec<f64> = candidate
        .iter()
        .enumerate()
        .map(|(i, &t)| t - (i + 1) as f64 * min_gap)
        .collect();
    let upper = horizon - required;
    Ok(isotonic_regression(&shifted)
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.clamp(0.0, upper) + (i + 1) as f64 * min_gap)
        .collect())
}

/// Componentwise clamp of every level into its box.
pub fn project_controls(controls: &ControlVector, boxes: &[ControlBox]) -> Result<ControlVector> {
    if boxes.len() != controls.len() {
        return Err(Error::Dimension(format!(
            "{} boxes for {} levels",
            boxes.len(),
            controls.len()
        )));
    }
    ControlVector::new(
        controls
            .levels()
            .iter()
            .zip(boxes)
            .map(|(a, b)| b.project(a))
            .collect(),
    )
}

fn record(
    iteration: usize,
    schedule: &ImpulseSchedule,
    controls: &ControlVector,
    report: &GradientReport,
    step: f64,
    shrinks: usize,
    points_per_interval: usize,
) -> IterationRecord {
    IterationRecord {
        iteration,
        tau: schedule.times().to_vec(),
        levels: controls.flatten(),
        cost: report.cost,
        tau_residual: report.tau_stationarity,
        vi_residual: report.a_vi_residual,
        step,
        shrinks,
        points_per_interval,
    }
}

/// Projected gradient with backtracking from a feasible starting point.
pub fn optimize(
    problem: &dyn ImpulsiveProblem,
    init_schedule: &ImpulseSchedule,
    init_controls: &ControlVector,
    options: &OptimizeOptions,
) -> Result<OptimizationTrace> {
    options.validate()?;
    let horizon = init_schedule.horizon();
    let min_gap = options.min_gap.unwrap_or(init_schedule.min_gap());
    let mut schedule = ImpulseSchedule::new(init_schedule.times().to_vec(), horizon, min_gap)?;
    let boxes = control_boxes(problem, schedule.len());
    if let Some(i) = init_controls
        .levels()
        .iter()
        .zip(&boxes)
        .position(|(a, b)| !b.contains(a))
    {
        return Err(Error::InvalidArgument(format!(
            "initial level a_{i} lies outside its control box"
        )));
    }
    let mut controls = init_controls.clone();
    let m = options.points_per_interval;
    let evaluate = |s: &ImpulseSchedule, c: &ControlVector| {
        gradient_report(problem, s, c, m, &options.solve, None)
    };

    let mut report = evaluate(&schedule, &controls)?;
    let mut records = vec![record(0, &schedule, &controls, &report, 0.0, 0, m)];
    let mut converged = false;
    for iteration in 1..=options.max_iters {
        if report.tau_stationarity < options.tau_tol && report.a_vi_residual < options.vi_tol {
            converged = true;
            break;
        }
        let (move_tau, move_a) = match options.mode {
            StepMode::Joint => (true, true),
            StepMode::Alternating => {
                let tau_turn = iteration % 2 == 1;
                let tau_done = report.tau_stationarity < options.tau_tol;
                let a_done = report.a_vi_residual < options.vi_tol;
                let tau_turn = (tau_turn && !tau_done) || a_done;
                (tau_turn, !tau_turn)
            }
        };
        let cost = report.cost;
        let mut step = options.initial_step;
        let mut accepted = None;
        for shrinks in 0..options.max_shrinks {
            let tau: Vec<f64> = if move_tau {
                let trial: Vec<f64> = schedule
                    .times()
                    .iter()
                    .zip(&report.dj_dtau)
                    .map(|(t, g)| t - step * g)
                    .collect();
                project_schedule(&trial, min_gap, horizon)?
            } else {
                schedule.times().to_vec()
            };
            let levels = if move_a {
                let trial: Vec<_> = controls
                    .levels()
                    .iter()
                    .enumerate()
                    .map(|(i, a)| a - step * report.dj_da.row(i).transpose())
                    .collect();
                project_controls(&ControlVector::new(trial)?, &boxes)?
            } else {
                controls.clone()
            };
            let mut predicted = 0.0;
            for (j, (new, old)) in tau.iter().zip(schedule.times()).enumerate() {
                predicted += report.dj_dtau[j] * (new - old);
            }
            for (i, (new, old)) in levels.levels().iter().zip(controls.levels()).enumerate() {
                predicted += (report.dj_da.row(i).transpose()).dot(&(new - old));
            }
            let trial_schedule = ImpulseSchedule::new(tau, horizon, min_gap)?;
            let trial_cost = solve_cost(problem, &trial_schedule, &levels, m, &options.solve)?;
            if predicted < 0.0 && trial_cost <= cost + options.armijo * predicted {
                accepted = Some((trial_schedule, levels, shrinks));
                break;
            }
            step *= options.shrink;
        }
        let Some((next_schedule, next_controls, shrinks)) = accepted else {
            return Err(Error::LineSearchStall {
                iteration,
                shrinks: options.max_shrinks,
                cost,
                tau_residual: report.tau_stationarity,
                vi_residual: report.a_vi_residual,
            });
        };
        schedule = next_schedule;
        controls = next_controls;
        report = evaluate(&schedule, &controls)?;
        records.push(record(
            iteration, &schedule, &controls, &report, step, shrinks, m,
        ));
    }
    if !converged {
        converged =
            report.tau_stationarity < options.tau_tol && report.a_vi_residual < options.vi_tol;
    }
    Ok(OptimizationTrace {
        records,
        converged,
        schedule,
        controls,
        report,
    })
}
