//! Dispatch of a validated configuration to the solver modules.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use impulse_volterra::analysis::Analysis;
use impulse_volterra::gradient::{gradient_report, GradientReport};
use impulse_volterra::optimize::optimize;
use impulse_volterra::{build_mesh, jump_residual, solve_state, Error as CoreError};
use serde::Serialize;
use thiserror::Error;

use crate::checks::run_checks;
use crate::config::{Command, ConfigError, RunConfig};
use crate::output::{
    gradient_rows, trajectory_rows, write_checks, write_json, write_level_gradient,
    write_tau_gradient, write_trace, write_trajectory, OutputError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const TAU_GRADIENT_FILE: &str = "gradient_tau.csv";
pub const LEVEL_GRADIENT_FILE: &str = "gradient_a.csv";
pub const CHECKS_FILE: &str = "checks.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ERROR_FILE: &str = "error.json";
/// The only artifact that carries wall-clock times.
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("cannot create output directory {path}: {source}")]
    OutputDir {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(ConfigError::Io { .. }) | Self::Output(_) | Self::OutputDir { .. } => {
                EXIT_IO
            }
            Self::Config(_) => EXIT_VALIDATION,
            Self::Core(e) => match e {
                CoreError::FixedPointDiverged { .. }
                | CoreError::SingularBlock { .. }
                | CoreError::LineSearchStall { .. } => EXIT_NUMERICAL,
                _ => EXIT_VALIDATION,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_IO => "io",
            EXIT_NUMERICAL => "numerical",
            _ => "validation",
        }
    }
}

/// Machine-readable record of a failed run.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl From<&RunError> for ErrorRecord {
    fn from(e: &RunError) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
            exit_code: e.exit_code(),
        }
    }
}

/// What a finished run reports back.
#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    /// Human-readable lines for the terminal.
    pub lines: Vec<String>,
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    problem: &'a str,
    version: &'a str,
    started_unix_ms: u128,
    finished_unix_ms: u128,
    exit_code: i32,
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    command: &'a str,
    problem: &'a str,
    points_per_interval: usize,
    tau: &'a [f64],
    levels: Vec<f64>,
    cost: f64,
    max_jump_residual: f64,
}

#[derive(Serialize)]
struct GradSummary<'a> {
    command: &'a str,
    problem: &'a str,
    points_per_interval: usize,
    tau: &'a [f64],
    levels: Vec<f64>,
    cost: f64,
    tau_stationarity: f64,
    vi_residual: f64,
    finite_differences: bool,
}

#[derive(Serialize)]
struct CheckSummary<'a> {
    command: &'a str,
    problem: &'a str,
    points_per_interval: usize,
    passed: bool,
    failed: Vec<&'a str>,
}

#[derive(Serialize)]
struct OptimizeSummary<'a> {
    command: &'a str,
    problem: &'a str,
    points_per_interval: usize,
    converged: bool,
    iterations: usize,
    monotone: bool,
    initial_cost: f64,
    cost: f64,
    tau: &'a [f64],
    levels: Vec<f64>,
    tau_stationarity: f64,
    vi_residual: f64,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

fn write_gradient(dir: &Path, report: &GradientReport) -> Result<(), RunError> {
    let (tau, levels) = gradient_rows(report);
    write_tau_gradient(&dir.join(TAU_GRADIENT_FILE), &tau)?;
    write_level_gradient(&dir.join(LEVEL_GRADIENT_FILE), &levels)?;
    Ok(())
}

/// Runs the configured command and writes its artifacts into the output
/// directory. A check failure or a non-converged optimization is reported
/// through the exit code, not as an error.
pub fn run(config: &RunConfig) -> Result<RunOutcome, RunError> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|source| RunError::OutputDir {
        path: dir.clone(),
        source,
    })?;
    let setup = config.setup()?;
    let problem = setup.builtin.problem.as_ref();
    let (schedule, controls) = (&setup.schedule, &setup.controls);
    let m = config.points_per_interval;
    let command = config.command.name();
    let name = config.problem.as_str();

    match config.command {
        Command::Solve => {
            let mesh = build_mesh(schedule, m)?;
            let trajectory = solve_state(problem, schedule, controls, &mesh, &config.solve)?;
            write_trajectory(
                &dir.join(TRAJECTORY_FILE),
                &trajectory_rows(&mesh, &trajectory),
            )?;
            let jumps = jump_residual(problem, schedule, controls, &trajectory);
            let cost =
                impulse_volterra::evaluate_cost(problem, schedule, controls, &trajectory, &mesh);
            let summary = SolveSummary {
                command,
                problem: name,
                points_per_interval: m,
                tau: schedule.times(),
                levels: controls.flatten(),
                cost,
                max_jump_residual: jumps.iter().fold(0.0, |a, b| a.max(*b)),
            };
            write_json(&dir.join(SUMMARY_FILE), &summary)?;
            Ok(RunOutcome {
                exit_code: EXIT_OK,
                lines: vec![
                    format!("J = {cost}"),
                    format!("{} grid points", mesh.point_count()),
                ],
            })
        }
        Command::Grad => {
            let fd = config.finite_differences.then_some(config.fd_steps);
            let report = gradient_report(problem, schedule, controls, m, &config.solve, fd)?;
            write_gradient(dir, &report)?;
            let summary = GradSummary {
                command,
                problem: name,
                points_per_interval: m,
                tau: schedule.times(),
                levels: controls.flatten(),
                cost: report.cost,
                tau_stationarity: report.tau_stationarity,
                vi_residual: report.a_vi_residual,
                finite_differences: fd.is_some(),
            };
            write_json(&dir.join(SUMMARY_FILE), &summary)?;
            Ok(RunOutcome {
                exit_code: EXIT_OK,
                lines: vec![
                    format!("J = {}", report.cost),
                    format!("dJ/dtau = {:?}", report.dj_dtau),
                    format!("dJ/da = {:?}", report.dj_da.as_slice()),
                ],
            })
        }
        Command::Check => {
            let mesh = build_mesh(schedule, m)?;
            let analysis = Analysis::new(problem, schedule, controls, mesh, &config.solve)?;
            let records = run_checks(&analysis, setup.builtin.ode.as_deref(), &config.check);
            write_checks(&dir.join(CHECKS_FILE), &records)?;
            let failed: Vec<&str> = records
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name.as_str())
                .collect();
            let summary = CheckSummary {
                command,
                problem: name,
                points_per_interval: m,
                passed: failed.is_empty(),
                failed: failed.clone(),
            };
            write_json(&dir.join(SUMMARY_FILE), &summary)?;
            let lines = records
                .iter()
                .map(|c| {
                    let verdict = if c.passed { "pass" } else { "FAIL" };
                    format!(
                        "{verdict} {:<20} {:.3e} (tol {:.1e})",
                        c.name, c.value, c.tolerance
                    )
                })
                .collect();
            Ok(RunOutcome {
                exit_code: if failed.is_empty() {
                    EXIT_OK
                } else {
                    EXIT_VALIDATION
                },
                lines,
            })
        }
        Command::Optimize => {
            let trace = optimize(problem, schedule, controls, &config.optimizer)?;
            write_trace(&dir.join(TRACE_FILE), &trace.records)?;
            write_gradient(dir, &trace.report)?;
            let last = trace.final_record();
            let summary = OptimizeSummary {
                command,
                problem: name,
                points_per_interval: m,
                converged: trace.converged,
                iterations: last.iteration,
                monotone: trace.is_monotone(),
                initial_cost: trace.records[0].cost,
                cost: last.cost,
                tau: &last.tau,
                levels: last.levels.clone(),
                tau_stationarity: last.tau_residual,
                vi_residual: last.vi_residual,
            };
            write_json(&dir.join(SUMMARY_FILE), &summary)?;
            let status = if trace.converged {
                "converged"
            } else {
                "not converged"
            };
            Ok(RunOutcome {
                exit_code: if trace.converged {
                    EXIT_OK
                } else {
                    EXIT_NUMERICAL
                },
                lines: vec![
                    format!("{status} after {} iterations", last.iteration),
                    format!("J = {} (from {})", last.cost, trace.records[0].cost),
                    format!("tau = {:?}", last.tau),
                    format!("a = {:?}", last.levels),
                    format!(
                        "|dJ/dtau| = {:e}, VI residual = {:e}",
                        last.tau_residual, last.vi_residual
                    ),
                ],
            })
        }
    }
}

/// Runs the configuration and records the outcome: an error record on failure
/// and the timestamped metadata file in every case the directory allows.
pub fn execute(config: &RunConfig) -> (i32, Vec<String>) {
    let started = now_ms();
    let error_path = config.output_dir.join(ERROR_FILE);
    let (code, lines) = match run(config) {
        Ok(outcome) => {
            let _ = fs::remove_file(&error_path);
            (outcome.exit_code, outcome.lines)
        }
        Err(e) => {
            let record = ErrorRecord::from(&e);
            let mut lines = vec![format!("error: {e}")];
            if config.output_dir.is_dir() {
                if let Err(w) = write_json(&error_path, &record) {
                    lines.push(format!("error: {w}"));
                }
            }
            (record.exit_code, lines)
        }
    };
    let meta = Meta {
        command: config.command.name(),
        problem: &config.problem,
        version: env!("CARGO_PKG_VERSION"),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        exit_code: code,
    };
    if config.output_dir.is_dir() {
        if let Err(e) = write_json(&config.output_dir.join(META_FILE), &meta) {
            return (EXIT_IO, [lines, vec![format!("error: {e}")]].concat());
        }
    }
    (code, lines)
}
