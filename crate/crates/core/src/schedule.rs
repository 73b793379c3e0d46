//! Impulse schedules and piecewise-constant control levels.

use std::fmt;

use crate::{Error, Result, Vector};

/// Relative slack (times the horizon) accepted in the ordering constraints so
/// that projected schedules round-trip through validation.
pub(crate) const FEASIBILITY_SLACK: f64 = 1e-12;

/// One violated constraint of an impulse schedule.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleViolation {
    /// `τ_1 < δ`.
    FirstTooEarly { tau: f64, min_gap: f64 },
    /// `τ_{i+1} − τ_i < δ`, reported with the 1-based index `i` of the left instant.
    GapTooSmall {
        index: usize,
        gap: f64,
        min_gap: f64,
    },
    /// `τ_N > T − δ`.
    LastTooLate { tau: f64, limit: f64 },
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::FirstTooEarly { tau, min_gap } => {
                write!(f, "tau_1 = {tau} < delta = {min_gap}")
            }
            Self::GapTooSmall {
                index,
                gap,
                min_gap,
            } => write!(
                f,
                "tau_{} - tau_{} = {gap} < delta = {min_gap}",
                index + 1,
                index
            ),
            Self::LastTooLate { tau, limit } => write!(f, "tau_N = {tau} > T - delta = {limit}"),
        }
    }
}

/// Checks the ordering constraints `δ ≤ τ_1`, `τ_{i+1} − τ_i ≥ δ`, `τ_N ≤ T − δ`.
///
/// Returns every violated constraint, or an error if an entry is not finite.
pub fn validate_schedule(
    times: &[f64],
    horizon: f64,
    min_gap: f64,
) -> Result<Vec<ScheduleViolation>> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if !(min_gap > 0.0 && min_gap.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "min_gap must be positive, got {min_gap}"
        )));
    }
    if let Some((index, &value)) = times.iter().enumerate().find(|(_, t)| !t.is_finite()) {
        return Err(Error::NonFiniteTime {
            index: index + 1,
            value,
        });
    }
    let slack = FEASIBILITY_SLACK * horizon;
    let mut violations = Vec::new();
    if let Some(&first) = times.first() {
        if first < min_gap - slack {
            violations.push(ScheduleViolation::FirstTooEarly {
                tau: first,
                min_gap,
            });
        }
    }
    for (i, w) in times.windows(2).enumerate() {
        let gap = w[1] - w[0];
        if gap < min_gap - slack {
            violations.push(ScheduleViolation::GapTooSmall {
                index: i + 1,
                gap,
                min_gap,
            });
        }
    }
    if let Some(&last) = times.last() {
        let limit = horizon - min_gap;
        if last > limit + slack {
            violations.push(ScheduleViolation::LastTooLate { tau: last, limit });
        }
    }
    Ok(violations)
}

/// Strictly ordered impulse instants `τ_1 < … < τ_N` inside `(0, T)`.
///
/// The sentinels `τ_0 = 0` and `τ_{N+1} = T` are derived by [`Self::boundary`].
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseSchedule {
    times: Vec<f64>,
    horizon: f64,
    min_gap: f64,
}

impl ImpulseSchedule {
    pub fn new(times: Vec<f64>, horizon: f64, min_gap: f64) -> Result<Self> {
        let violations = validate_schedule(&times, horizon, min_gap)?;
        if !violations.is_empty() {
            return Err(Error::InvalidSchedule(violations));
        }
        Ok(Self {
            times,
            horizon,
            min_gap,
        })
    }

    /// Schedule with the default minimum gap `10⁻³·T`.
    pub fn with_default_gap(times: Vec<f64>, horizon: f64) -> Result<Self> {
        Self::new(times, horizon, 1e-3 * horizon)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }

    /// `τ_i` for `i ∈ 0..=N+1`, including the sentinels.
    pub fn boundary(&self, i: usize) -> f64 {
        let n = self.times.len();
        match i {
            0 => 0.0,
            i if i == n + 1 => self.horizon,
            i => self.times[i - 1],
        }
    }

    /// Copy with `τ_j` (1-based) replaced; the result is re-validated.
    pub fn with_time(&self, j: usize, value: f64) -> Result<Self> {
        let mut times = self.times.clone();
        times[j - 1] = value;
        Self::new(times, self.horizon, self.min_gap)
    }

    /// Index of the interval `(τ_i, τ_{i+1})` containing `t`, with ties at an
    /// impulse instant resolved by `side`.
    pub fn interval_of(&self, t: f64, side: Side) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let below = self.times.partition_point(|&tau| tau < t);
        let at_impulse = self.times.get(below).is_some_and(|&tau| tau == t);
        Ok(match (at_impulse, side) {
            (true, Side::Right) => below + 1,
            _ => below,
        })
    }
}

/// Which one-sided value to use when a query lands exactly on an impulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Control levels `(a_0, …, a_N)`; `u(t) = a_i` on `(τ_i, τ_{i+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlVector {
    levels: Vec<Vector>,
}

impl ControlVector {
    pub fn new(levels: Vec<Vector>) -> Result<Self> {
        let Some(m) = levels.first().map(|a| a.len()) else {
            return Err(Error::InvalidArgument(
                "at least one control level is required".into(),
            ));
        };
        if levels.iter().any(|a| a.len() != m) {
            return Err(Error::Dimension("control levels differ in length".into()));
        }
        Ok(Self { levels })
    }

    /// Scalar controls (`m = 1`).
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Vector::from_element(1, v)).collect())
    }

    pub fn levels(&self) -> &[Vector] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [Vector] {
        &mut self.levels
    }

    pub fn level(&self, i: usize) -> &Vector {
        &self.levels[i]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn control_dim(&self) -> usize {
        self.levels[0].len()
    }

    /// Flattened `(N+1)·m` vector, level-major.
    pub fn flatten(&self) -> Vec<f64> {
        self.levels.iter().flat_map(|a| a.iter().copied()).collect()
    }

    pub fn from_flat(values: &[f64], control_dim: usize) -> Result<Self> {
        if control_dim == 0 || !values.len().is_multiple_of(control_dim) {
            return Err(Error::Dimension(format!(
                "{} values cannot be split into levels of size {control_dim}",
                values.len()
            )));
        }
        Self::new(
            values
                .chunks(control_dim)
                .map(Vector::from_column_slice)
                .collect(),
        )
    }
}

/// `u(t)`; at an impulse instant `side` selects `a_{i−1}` (left) or `a_i` (right).
pub fn control_at<'a>(
    schedule: &ImpulseSchedule,
    controls: &'a ControlVector,
    t: f64,
    side: Side,
) -> Result<&'a Vector> {
    if controls.len() != schedule.len() + 1 {
        return Err(Error::Dimension(format!(
            "{} control levels for {} impulses",
            controls.len(),
            schedule.len()
        )));
    }
    Ok(controls.level(schedule.interval_of(t, side)?))
}
