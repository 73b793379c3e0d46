use thiserror::Error;

use crate::schedule::ScheduleViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("impulse time {index} is not finite ({value})")]
    NonFiniteTime { index: usize, value: f64 },

    #[error("invalid impulse schedule: {}", format_violations(.0))]
    InvalidSchedule(Vec<ScheduleViolation>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {t} lies outside the horizon [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(
        "fixed-point iteration did not converge at node {node} (t = {t}): \
         last update {update:e} after {iterations} iterations"
    )]
    FixedPointDiverged {
        node: usize,
        t: f64,
        update: f64,
        iterations: usize,
    },

    #[error("singular diagonal block at grid point {point}")]
    SingularBlock { point: usize },

    #[error("path enumeration refused for N = {0} (limit 12)")]
    PathEnumerationTooLarge(usize),

    #[error("feasible set is empty: (N + 1)·δ = {required} exceeds horizon {horizon}")]
    InfeasibleProjection { required: f64, horizon: f64 },

    #[error("finite-difference step {h} too large for schedule margin {margin}")]
    StepTooLarge { h: f64, margin: f64 },

    #[error(
        "line search stalled at iteration {iteration} after {shrinks} shrinks \
         (J = {cost}, |dJ/dtau| = {tau_residual:e}, VI residual = {vi_residual:e})"
    )]
    LineSearchStall {
        iteration: usize,
        shrinks: usize,
        cost: f64,
        tau_residual: f64,
        vi_residual: f64,
    },
}

fn format_violations(v: &[ScheduleViolation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
