//! Strict TOML run configuration.
//!
//! Every table rejects unknown keys, so a misspelled option fails loudly
//! instead of silently falling back to a default.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use impulse_volterra::optimize::{OptimizeOptions, StepMode};
use impulse_volterra::oracle::FdSteps;
use impulse_volterra::problems::{builtin, Builtin, BUILTIN_NAMES};
use impulse_volterra::{
    validate_schedule, ControlVector, Error as CoreError, ImpulseSchedule, SolveOptions,
};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Grad,
    Check,
    Optimize,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Grad => "grad",
            Self::Check => "check",
            Self::Optimize => "optimize",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Command,
    problem: RawProblem,
    #[serde(default)]
    schedule: RawSchedule,
    #[serde(default)]
    controls: RawControls,
    #[serde(default)]
    mesh: RawMesh,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    gradient: RawGradient,
    #[serde(default)]
    optimizer: RawOptimizer,
    #[serde(default)]
    check: RawCheck,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    name: String,
    #[serde(default)]
    parameters: BTreeMap<String, f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    tau: Option<Vec<f64>>,
    min_gap: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControls {
    levels: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawMesh {
    points_per_interval: usize,
}

impl Default for RawMesh {
    fn default() -> Self {
        Self {
            points_per_interval: 100,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    fp_tol: Option<f64>,
    fp_max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGradient {
    #[serde(default)]
    finite_differences: bool,
    h_tau: Option<f64>,
    h_a: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    max_iters: Option<usize>,
    initial_step: Option<f64>,
    shrink: Option<f64>,
    armijo: Option<f64>,
    max_shrinks: Option<usize>,
    tau_tol: Option<f64>,
    vi_tol: Option<f64>,
    mode: Option<RawMode>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawMode {
    Joint,
    Alternating,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCheck {
    jump: Option<f64>,
    gamma: Option<f64>,
    identity: Option<f64>,
    duality: Option<f64>,
    variation: Option<f64>,
    ode: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

/// Tolerances of the `check` suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckTolerances {
    pub jump: f64,
    /// Largest entry of `Γ(series) − Γ(paths)` allowed, relative to `max |Γ|`.
    pub gamma: f64,
    /// Resolvent, adjoint and co-state residuals.
    pub identity: f64,
    /// Relative forward/adjoint duality gap.
    pub duality: f64,
    pub variation: f64,
    /// `ψ` and `ρ` residuals; these are trapezoid errors, so the default
    /// `10⁻⁶ (400/M)²` follows the mesh.
    pub ode: f64,
}

impl CheckTolerances {
    pub fn for_mesh(points_per_interval: usize) -> Self {
        let ratio = 400.0 / points_per_interval as f64;
        Self {
            jump: 1e-10,
            gamma: 1e-12,
            identity: 1e-8,
            duality: 1e-8,
            variation: 1e-8,
            ode: 1e-6 * ratio * ratio,
        }
    }
}

/// A parsed and validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub problem: String,
    pub parameters: BTreeMap<String, f64>,
    pub tau: Option<Vec<f64>>,
    pub min_gap: Option<f64>,
    pub levels: Option<Vec<f64>>,
    pub points_per_interval: usize,
    pub solve: SolveOptions,
    pub finite_differences: bool,
    pub fd_steps: FdSteps,
    pub optimizer: OptimizeOptions,
    pub check: CheckTolerances,
    pub output_dir: PathBuf,
}

/// The problem with the configured starting point.
pub struct Setup {
    pub builtin: Builtin,
    pub schedule: ImpulseSchedule,
    pub controls: ControlVector,
}

impl RunConfig {
    /// Instantiates the built-in problem and applies the configured schedule and levels.
    pub fn setup(&self) -> Result<Setup, ConfigError> {
        let b = builtin(&self.problem, &self.parameters).map_err(|e| match e {
            CoreError::InvalidArgument(m) if m.starts_with("unknown parameter") => {
                invalid("problem.parameters", m)
            }
            e => invalid("problem.name", e.to_string()),
        })?;
        let horizon = b.schedule.horizon();
        let times = self
            .tau
            .clone()
            .unwrap_or_else(|| b.schedule.times().to_vec());
        let min_gap = self.min_gap.unwrap_or(b.schedule.min_gap());
        let violations = validate_schedule(&times, horizon, min_gap)
            .map_err(|e| invalid("schedule", e.to_string()))?;
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(invalid(
                "schedule.tau",
                format!(
                    "violates the ordering constraint delta <= tau_1, tau_i + delta <= tau_(i+1), tau_N <= T - delta: {}",
                    list.join("; ")
                ),
            ));
        }
        let schedule = ImpulseSchedule::new(times, horizon, min_gap)
            .map_err(|e| invalid("schedule", e.to_string()))?;

        let m = b.problem.control_dim();
        let expected = (schedule.len() + 1) * m;
        let levels = match &self.levels {
            Some(l) => l.clone(),
            None if b.controls.len() == schedule.len() + 1 => b.controls.flatten(),
            None => {
                return Err(invalid(
                    "controls.levels",
                    format!(
                        "required when the schedule has {} instants ({expected} values)",
                        schedule.len()
                    ),
                ))
            }
        };
        if levels.len() != expected {
            return Err(invalid(
                "controls.levels",
                format!(
                    "expected (N + 1)·m = {expected} values, got {}",
                    levels.len()
                ),
            ));
        }
        let controls = ControlVector::from_flat(&levels, m)
            .map_err(|e| invalid("controls.levels", e.to_string()))?;
        for (i, a) in controls.levels().iter().enumerate() {
            if !b.problem.control_box(i).contains(a) {
                return Err(invalid(
                    "controls.levels",
                    format!("level a_{i} lies outside its control box"),
                ));
            }
        }
        Ok(Setup {
            builtin: b,
            schedule,
            controls,
        })
    }
}

/// Reads and validates a configuration; relative output paths are resolved
/// against the directory of the file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base).map_err(|e| match e {
        ConfigError::Parse { message, .. } => ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        },
        e => e,
    })
}

/// Parses configuration text; `base` anchors a relative output directory.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: PathBuf::from("<config>"),
        message: e.to_string(),
    })?;

    if !BUILTIN_NAMES.contains(&raw.problem.name.as_str()) {
        return Err(invalid(
            "problem.name",
            format!(
                "unknown problem {:?}; expected one of {}",
                raw.problem.name,
                BUILTIN_NAMES.join(", ")
            ),
        ));
    }
    if raw.mesh.points_per_interval == 0 {
        return Err(invalid("mesh.points_per_interval", "must be at least 1"));
    }
    let m = raw.mesh.points_per_interval;

    let mut solve = SolveOptions::default();
    if let Some(v) = raw.solver.fp_tol {
        solve.fp_tol = v;
    }
    if let Some(v) = raw.solver.fp_max_iter {
        solve.fp_max_iter = v;
    }
    solve
        .validate()
        .map_err(|e| invalid("solver", e.to_string()))?;

    let mut fd_steps = FdSteps::default();
    for (name, value, slot) in [
        ("gradient.h_tau", raw.gradient.h_tau, &mut fd_steps.tau),
        ("gradient.h_a", raw.gradient.h_a, &mut fd_steps.level),
    ] {
        if let Some(v) = value {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
            *slot = v;
        }
    }

    let o = &raw.optimizer;
    let mut optimizer = OptimizeOptions {
        points_per_interval: m,
        min_gap: raw.schedule.min_gap,
        solve,
        ..OptimizeOptions::default()
    };
    optimizer.max_iters = o.max_iters.unwrap_or(optimizer.max_iters);
    optimizer.initial_step = o.initial_step.unwrap_or(optimizer.initial_step);
    optimizer.shrink = o.shrink.unwrap_or(optimizer.shrink);
    optimizer.armijo = o.armijo.unwrap_or(optimizer.armijo);
    optimizer.max_shrinks = o.max_shrinks.unwrap_or(optimizer.max_shrinks);
    optimizer.tau_tol = o.tau_tol.unwrap_or(optimizer.tau_tol);
    optimizer.vi_tol = o.vi_tol.unwrap_or(optimizer.vi_tol);
    if let Some(mode) = o.mode {
        optimizer.mode = match mode {
            RawMode::Joint => StepMode::Joint,
            RawMode::Alternating => StepMode::Alternating,
        };
    }
    optimizer
        .validate()
        .map_err(|e| invalid("optimizer", e.to_string()))?;

    let mut check = CheckTolerances::for_mesh(m);
    let c = &raw.check;
    for (name, value, slot) in [
        ("check.jump", c.jump, &mut check.jump),
        ("check.gamma", c.gamma, &mut check.gamma),
        ("check.identity", c.identity, &mut check.identity),
        ("check.duality", c.duality, &mut check.duality),
        ("check.variation", c.variation, &mut check.variation),
        ("check.ode", c.ode, &mut check.ode),
    ] {
        if let Some(v) = value {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be non-negative, got {v}")));
            }
            *slot = v;
        }
    }

    let dir = raw.output.dir.unwrap_or_else(|| PathBuf::from("out"));
    let config = RunConfig {
        command: raw.command,
        problem: raw.problem.name,
        parameters: raw.problem.parameters,
        tau: raw.schedule.tau,
        min_gap: raw.schedule.min_gap,
        levels: raw.controls.levels,
        points_per_interval: m,
        solve,
        finite_differences: raw.gradient.finite_differences,
        fd_steps,
        optimizer,
        check,
        output_dir: if dir.is_absolute() {
            dir
        } else {
            base.join(dir)
        },
    };
    config.setup()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        parse_config(text, Path::new("/work"))
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse("command = \"solve\"\n[problem]\nname = \"P-LIN\"\n").unwrap();
        assert_eq!(c.command, Command::Solve);
        assert_eq!(c.points_per_interval, 100);
        assert_eq!(c.solve, SolveOptions::default());
        assert!(!c.finite_differences);
        assert_eq!(c.fd_steps, FdSteps::default());
        assert_eq!(c.optimizer.max_iters, 200);
        assert_eq!(c.output_dir, PathBuf::from("/work/out"));
        assert!(c.tau.is_none() && c.levels.is_none());
    }

    #[test]
    fn unordered_schedule_names_the_ordering_constraint() {
        let text =
            "command = \"solve\"\n[problem]\nname = \"P-JUMP\"\n[schedule]\ntau = [0.7, 0.3]\n";
        let err = parse(text).unwrap_err();
        let message = err.to_string();
        assert!(matches!(&err, ConfigError::Invalid { field, .. } if field == "schedule.tau"));
        assert!(message.contains("ordering constraint"), "{message}");
        assert!(message.contains("tau_2 - tau_1"), "{message}");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = "command = \"solve\"\nmeshh = 3\n[problem]\nname = \"P-LIN\"\n";
        let message = parse(text).unwrap_err().to_string();
        assert!(message.contains("meshh"), "{message}");
    }

    #[test]
    fn nested_unknown_key_is_named() {
        let text = "command = \"solve\"\n[problem]\nname = \"P-LIN\"\n[mesh]\npoints = 3\n";
        let message = parse(text).unwrap_err().to_string();
        assert!(message.contains("points"), "{message}");
    }

    #[test]
    fn parse_errors_carry_a_position() {
        let message = parse("command = \"solve\"\n[problem\n")
            .unwrap_err()
            .to_string();
        assert!(message.contains("line 2"), "{message}");
    }

    #[test]
    fn unknown_problem_and_parameter_are_rejected() {
        let err = parse("command = \"solve\"\n[problem]\nname = \"P-NOPE\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref field, .. } if field == "problem.name"));
        let err =
            parse("command = \"solve\"\n[problem]\nname = \"P-LIN\"\nparameters = { kk = 1.0 }\n")
                .unwrap_err();
        assert!(
            matches!(err, ConfigError::Invalid { ref field, .. } if field == "problem.parameters")
        );
    }

    #[test]
    fn level_count_follows_the_schedule() {
        let text = "command = \"solve\"\n[problem]\nname = \"P-JUMP\"\n[schedule]\ntau = [0.5]\n";
        let err = parse(text).unwrap_err();
        assert!(
            matches!(err, ConfigError::Invalid { ref field, .. } if field == "controls.levels")
        );
        let text = "command = \"solve\"\n[problem]\nname = \"P-JUMP\"\n[schedule]\ntau = [0.5]\n[controls]\nlevels = [0.0, 0.0]\n";
        assert!(parse(text).is_ok());
    }

    #[test]
    fn levels_outside_the_box_are_rejected() {
        let text =
            "command = \"solve\"\n[problem]\nname = \"P-FULL\"\n[controls]\nlevels = [0.5, 1.5]\n";
        let err = parse(text).unwrap_err();
        assert!(err.to_string().contains("a_1"), "{err}");
    }

    #[test]
    fn options_are_validated_with_their_path() {
        let text =
            "command = \"optimize\"\n[problem]\nname = \"P-FULL\"\n[optimizer]\nshrink = 2.0\n";
        assert!(
            matches!(parse(text).unwrap_err(), ConfigError::Invalid { ref field, .. } if field == "optimizer")
        );
        let text = "command = \"grad\"\n[problem]\nname = \"P-FULL\"\n[gradient]\nh_tau = -1.0\n";
        assert!(
            matches!(parse(text).unwrap_err(), ConfigError::Invalid { ref field, .. } if field == "gradient.h_tau")
        );
        let text =
            "command = \"grad\"\n[problem]\nname = \"P-FULL\"\n[mesh]\npoints_per_interval = 0\n";
        assert!(parse(text).is_err());
    }

    #[test]
    fn ode_tolerance_follows_the_mesh() {
        assert_eq!(CheckTolerances::for_mesh(400).ode, 1e-6);
        assert_eq!(CheckTolerances::for_mesh(200).ode, 4e-6);
    }
}
