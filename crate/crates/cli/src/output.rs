//! Result tables on disk and the readers that load them back.
//!
//! Floats are written in their shortest round-trip form, so reading a table
//! reproduces every value bit for bit.

use std::fs;
use std::path::Path;

use impulse_volterra::gradient::GradientReport;
use impulse_volterra::optimize::IterationRecord;
use impulse_volterra::{Mesh, PiecewiseTrajectory};
use serde::Serialize;
use thiserror::Error;

use crate::checks::CheckRecord;

/// Floor of the denominator in the relative error columns.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

type Result<T> = std::result::Result<T, OutputError>;

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn format_error(path: &Path, message: impl Into<String>) -> OutputError {
    OutputError::Format {
        path: display(path),
        message: message.into(),
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn parse_f64(path: &Path, field: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| format_error(path, format!("not a number: {field:?}")))
}

fn parse_opt(path: &Path, field: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(path, field).map(Some)
    }
}

fn parse_usize(path: &Path, field: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| format_error(path, format!("not an index: {field:?}")))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|source| OutputError::Csv {
        path: display(path),
        source,
    })
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let csv_err = |source| OutputError::Csv {
        path: display(path),
        source,
    };
    let mut w = writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| OutputError::Io {
        path: display(path),
        source,
    })
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let csv_err = |source| OutputError::Csv {
        path: display(path),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in r.records() {
        rows.push(
            record
                .map_err(csv_err)?
                .iter()
                .map(str::to_string)
                .collect(),
        );
    }
    Ok((header, rows))
}

fn expect_header(path: &Path, header: &[String], expected: &[&str]) -> Result<()> {
    if header
        .iter()
        .map(String::as_str)
        .ne(expected.iter().copied())
    {
        return Err(format_error(
            path,
            format!("unexpected header {header:?}, expected {expected:?}"),
        ));
    }
    Ok(())
}

/// Whether a trajectory row is a one-sided limit at an impulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSide {
    Left,
    Right,
    Interior,
}

impl RowSide {
    fn symbol(self) -> &'static str {
        match self {
            Self::Left => "-",
            Self::Right => "+",
            Self::Interior => "·",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "-" => Some(Self::Left),
            "+" => Some(Self::Right),
            "·" => Some(Self::Interior),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub y: Vec<f64>,
    pub side: RowSide,
}

/// One row per grid point; impulse instants appear twice, as `−` and `+` rows.
pub fn trajectory_rows(mesh: &Mesh, trajectory: &PiecewiseTrajectory) -> Vec<TrajectoryRow> {
    let mut sides = vec![RowSide::Interior; mesh.point_count()];
    for i in 1..=mesh.impulse_count() {
        sides[mesh.left_point(i)] = RowSide::Left;
        sides[mesh.right_point(i)] = RowSide::Right;
    }
    sides
        .into_iter()
        .enumerate()
        .map(|(p, side)| TrajectoryRow {
            t: mesh.time(p),
            y: trajectory.at(p).iter().copied().collect(),
            side,
        })
        .collect()
}

pub fn write_trajectory(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.y.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|k| format!("y_{k}")));
    header.push("side".into());
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![fmt_f64(r.t)];
            row.extend(r.y.iter().map(|&v| fmt_f64(v)));
            row.push(r.side.symbol().into());
            row
        })
        .collect();
    write_rows(path, &header, &body)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let (header, rows) = read_rows(path)?;
    if header.len() < 2 || header[0] != "t" || header[header.len() - 1] != "side" {
        return Err(format_error(path, format!("unexpected header {header:?}")));
    }
    let dim = header.len() - 2;
    rows.iter()
        .map(|row| {
            let side = RowSide::parse(&row[dim + 1])
                .ok_or_else(|| format_error(path, format!("unknown side {:?}", row[dim + 1])))?;
            Ok(TrajectoryRow {
                t: parse_f64(path, &row[0])?,
                y: row[1..=dim]
                    .iter()
                    .map(|v| parse_f64(path, v))
                    .collect::<Result<_>>()?,
                side,
            })
        })
        .collect()
}

/// `(|analytic − fd|, |analytic − fd| / max(|fd|, floor))`.
fn errors(analytic: f64, fd: Option<f64>) -> (Option<f64>, Option<f64>) {
    match fd {
        Some(fd) => {
            let abs = (analytic - fd).abs();
            (Some(abs), Some(abs / fd.abs().max(RELATIVE_FLOOR)))
        }
        None => (None, None),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauGradientRow {
    pub j: usize,
    pub analytic: f64,
    pub fd: Option<f64>,
    pub abs_err: Option<f64>,
    pub rel_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelGradientRow {
    pub i: usize,
    pub k: usize,
    pub analytic: f64,
    pub fd: Option<f64>,
    pub abs_err: Option<f64>,
    pub rel_err: Option<f64>,
}

const TAU_HEADER: [&str; 5] = ["j", "dJ_dtau", "fd_dtau", "abs_err", "rel_err"];
const LEVEL_HEADER: [&str; 6] = ["i", "k", "dJ_da", "fd_da", "abs_err", "rel_err"];

/// Instant rows `j = 1..N` and level rows `(i, k)`, `i = 0..N`, `k = 1..m`.
pub fn gradient_rows(report: &GradientReport) -> (Vec<TauGradientRow>, Vec<LevelGradientRow>) {
    let tau = report
        .dj_dtau
        .iter()
        .enumerate()
        .map(|(j, &g)| {
            let fd = report.fd_dtau.as_ref().map(|f| f[j]);
            let (abs_err, rel_err) = errors(g, fd);
            TauGradientRow {
                j: j + 1,
                analytic: g,
                fd,
                abs_err,
                rel_err,
            }
        })
        .collect();
    let mut levels = Vec::new();
    for i in 0..report.dj_da.nrows() {
        for k in 0..report.dj_da.ncols() {
            let g = report.dj_da[(i, k)];
            let fd = report.fd_da.as_ref().map(|f| f[(i, k)]);
            let (abs_err, rel_err) = errors(g, fd);
            levels.push(LevelGradientRow {
                i,
                k: k + 1,
                analytic: g,
                fd,
                abs_err,
                rel_err,
            });
        }
    }
    (tau, levels)
}

pub fn write_tau_gradient(path: &Path, rows: &[TauGradientRow]) -> Result<()> {
    let header: Vec<String> = TAU_HEADER.iter().map(|s| s.to_string()).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.j.to_string(),
                fmt_f64(r.analytic),
                fmt_opt(r.fd),
                fmt_opt(r.abs_err),
                fmt_opt(r.rel_err),
            ]
        })
        .collect();
    write_rows(path, &header, &body)
}

pub fn read_tau_gradient(path: &Path) -> Result<Vec<TauGradientRow>> {
    let (header, rows) = read_rows(path)?;
    expect_header(path, &header, &TAU_HEADER)?;
    rows.iter()
        .map(|r| {
            Ok(TauGradientRow {
                j: parse_usize(path, &r[0])?,
                analytic: parse_f64(path, &r[1])?,
                fd: parse_opt(path, &r[2])?,
                abs_err: parse_opt(path, &r[3])?,
                rel_err: parse_opt(path, &r[4])?,
            })
        })
        .collect()
}

pub fn write_level_gradient(path: &Path, rows: &[LevelGradientRow]) -> Result<()> {
    let header: Vec<String> = LEVEL_HEADER.iter().map(|s| s.to_string()).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.i.to_string(),
                r.k.to_string(),
                fmt_f64(r.analytic),
                fmt_opt(r.fd),
                fmt_opt(r.abs_err),
                fmt_opt(r.rel_err),
            ]
        })
        .collect();
    write_rows(path, &header, &body)
}

pub fn read_level_gradient(path: &Path) -> Result<Vec<LevelGradientRow>> {
    let (header, rows) = read_rows(path)?;
    expect_header(path, &header, &LEVEL_HEADER)?;
    rows.iter()
        .map(|r| {
            Ok(LevelGradientRow {
                i: parse_usize(path, &r[0])?,
                k: parse_usize(path, &r[1])?,
                analytic: parse_f64(path, &r[2])?,
                fd: parse_opt(path, &r[3])?,
                abs_err: parse_opt(path, &r[4])?,
                rel_err: parse_opt(path, &r[5])?,
            })
        })
        .collect()
}

const TRACE_FIXED: [&str; 7] = [
    "iteration",
    "cost",
    "tau_residual",
    "vi_residual",
    "step",
    "shrinks",
    "points_per_interval",
];

/// One row per iterate: the fixed columns, then `tau_1..tau_N`, then the
/// levels flattened level-major as `a_1..a_K`.
pub fn write_trace(path: &Path, records: &[IterationRecord]) -> Result<()> {
    let (n_tau, n_levels) = records
        .first()
        .map_or((0, 0), |r| (r.tau.len(), r.levels.len()));
    let mut header: Vec<String> = TRACE_FIXED.iter().map(|s| s.to_string()).collect();
    header.extend((1..=n_tau).map(|j| format!("tau_{j}")));
    header.extend((1..=n_levels).map(|k| format!("a_{k}")));
    let body: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.iteration.to_string(),
                fmt_f64(r.cost),
                fmt_f64(r.tau_residual),
                fmt_f64(r.vi_residual),
                fmt_f64(r.step),
                r.shrinks.to_string(),
                r.points_per_interval.to_string(),
            ];
            row.extend(r.tau.iter().chain(&r.levels).map(|&v| fmt_f64(v)));
            row
        })
        .collect();
    write_rows(path, &header, &body)
}

pub fn read_trace(path: &Path) -> Result<Vec<IterationRecord>> {
    let (header, rows) = read_rows(path)?;
    let fixed = TRACE_FIXED.len();
    if header.len() < fixed {
        return Err(format_error(path, format!("unexpected header {header:?}")));
    }
    expect_header(path, &header[..fixed], &TRACE_FIXED)?;
    let n_tau = header[fixed..]
        .iter()
        .filter(|h| h.starts_with("tau_"))
        .count();
    rows.iter()
        .map(|r| {
            let values = |range: std::ops::Range<usize>| -> Result<Vec<f64>> {
                r[range].iter().map(|v| parse_f64(path, v)).collect()
            };
            Ok(IterationRecord {
                iteration: parse_usize(path, &r[0])?,
                cost: parse_f64(path, &r[1])?,
                tau_residual: parse_f64(path, &r[2])?,
                vi_residual: parse_f64(path, &r[3])?,
                step: parse_f64(path, &r[4])?,
                shrinks: parse_usize(path, &r[5])?,
                points_per_interval: parse_usize(path, &r[6])?,
                tau: values(fixed..fixed + n_tau)?,
                levels: values(fixed + n_tau..r.len())?,
            })
        })
        .collect()
}

const CHECK_HEADER: [&str; 4] = ["name", "value", "tolerance", "passed"];

pub fn write_checks(path: &Path, records: &[CheckRecord]) -> Result<()> {
    let header: Vec<String> = CHECK_HEADER.iter().map(|s| s.to_string()).collect();
    let body: Vec<Vec<String>> = records
        .iter()
        .map(|c| {
            vec![
                c.name.clone(),
                fmt_f64(c.value),
                fmt_f64(c.tolerance),
                c.passed.to_string(),
            ]
        })
        .collect();
    write_rows(path, &header, &body)
}

pub fn read_checks(path: &Path) -> Result<Vec<CheckRecord>> {
    let (header, rows) = read_rows(path)?;
    expect_header(path, &header, &CHECK_HEADER)?;
    rows.iter()
        .map(|r| {
            Ok(CheckRecord {
                name: r[0].clone(),
                value: parse_f64(path, &r[1])?,
                tolerance: parse_f64(path, &r[2])?,
                passed: r[3]
                    .parse()
                    .map_err(|_| format_error(path, format!("not a boolean: {:?}", r[3])))?,
            })
        })
        .collect()
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| OutputError::Json {
        path: display(path),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| OutputError::Io {
        path: display(path),
        source,
    })
}
