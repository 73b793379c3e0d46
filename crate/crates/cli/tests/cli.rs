//! End-to-end runs of the binary on the built-in problems.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use impulse_volterra_cli::output::{
    read_checks, read_level_gradient, read_tau_gradient, read_trace, read_trajectory, RowSide,
};
use tempfile::TempDir;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_impulse-volterra"))
}

/// Writes `body` as a config whose output directory is `out` next to it.
fn config(dir: &TempDir, body: &str) -> PathBuf {
    let path = dir.path().join("run.toml");
    fs::write(&path, format!("{body}\n[output]\ndir = \"out\"\n")).unwrap();
    path
}

fn run(path: &Path) -> (i32, String, String) {
    let out = binary().arg("run").arg(path).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn solve_writes_a_sided_trajectory() {
    let dir = TempDir::new().unwrap();
    let path = config(
        &dir,
        "command = \"solve\"\n[problem]\nname = \"P-JUMP\"\n[mesh]\npoints_per_interval = 10",
    );
    let (code, _, err) = run(&path);
    assert_eq!(code, 0, "{err}");
    let rows = read_trajectory(&dir.path().join("out/trajectory.csv")).unwrap();
    assert_eq!(rows.len(), 3 * 10 + 1 + 2);
    let left: Vec<_> = rows.iter().filter(|r| r.side == RowSide::Left).collect();
    let right: Vec<_> = rows.iter().filter(|r| r.side == RowSide::Right).collect();
    assert_eq!((left.len(), right.len()), (2, 2));
    for (l, r) in left.iter().zip(&right) {
        assert_eq!(l.t, r.t);
        assert!((r.y[0] - l.y[0] - 1.0).abs() < 1e-12);
    }
    assert!(dir.path().join("out/meta.json").exists());
}

#[test]
fn check_on_the_linear_problem_passes() {
    let dir = TempDir::new().unwrap();
    let path = config(
        &dir,
        "command = \"check\"\n[problem]\nname = \"P-LIN\"\n[mesh]\npoints_per_interval = 50",
    );
    let (code, stdout, err) = run(&path);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("pass"));
    let checks = read_checks(&dir.path().join("out/checks.csv")).unwrap();
    assert!(!checks.is_empty() && checks.iter().all(|c| c.passed));
}

#[test]
fn failed_checks_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let body = "command = \"check\"\n[problem]\nname = \"P-FULL\"\n[mesh]\npoints_per_interval = 20\n[check]\nduality = 0.0\njump = 0.0";
    let path = config(&dir, body);
    let (code, _, err) = run(&path);
    assert_eq!(code, 1);
    assert!(err.contains("FAIL"), "{err}");
}

#[test]
fn jump_gradient_matches_the_closed_form() {
    let dir = TempDir::new().unwrap();
    let body = "command = \"grad\"\n[problem]\nname = \"P-JUMP\"\n[schedule]\ntau = [0.3, 0.7]\n\
                [controls]\nlevels = [0.0, 0.0, 0.0]\n[gradient]\nfinite_differences = true";
    let path = config(&dir, body);
    let (code, _, err) = run(&path);
    assert_eq!(code, 0, "{err}");
    let tau = read_tau_gradient(&dir.path().join("out/gradient_tau.csv")).unwrap();
    assert_eq!(tau.len(), 2);
    assert!((tau[0].analytic + 1.0).abs() < 1e-6 && (tau[1].analytic + 3.0).abs() < 1e-6);
    assert!(tau.iter().all(|r| r.rel_err.unwrap() < 1e-6));
    let levels = read_level_gradient(&dir.path().join("out/gradient_a.csv")).unwrap();
    assert_eq!(levels.len(), 3);
    assert!(levels
        .iter()
        .all(|r| r.analytic == 0.0 && r.fd == Some(0.0)));
}

#[test]
fn optimize_writes_a_monotone_trace() {
    let dir = TempDir::new().unwrap();
    let body =
        "command = \"optimize\"\n[problem]\nname = \"P-FULL\"\n[mesh]\npoints_per_interval = 30";
    let path = config(&dir, body);
    let (code, _, err) = run(&path);
    assert_eq!(code, 0, "{err}");
    let trace = read_trace(&dir.path().join("out/trace.csv")).unwrap();
    assert!(trace.len() > 1);
    assert!(trace.windows(2).all(|w| w[1].cost < w[0].cost));
    assert_eq!(trace[0].tau, vec![0.4]);
    let last = trace.last().unwrap();
    assert!(last.tau_residual < 1e-4 && last.vi_residual < 1e-4);
}

#[test]
fn exhausted_iterations_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let body = "command = \"optimize\"\n[problem]\nname = \"P-FULL\"\n[mesh]\npoints_per_interval = 20\n[optimizer]\nmax_iters = 1";
    let path = config(&dir, body);
    let (code, _, err) = run(&path);
    assert_eq!(code, 2, "{err}");
    assert!(dir.path().join("out/trace.csv").exists());
}

#[test]
fn invalid_configs_exit_with_one_and_name_the_problem() {
    let dir = TempDir::new().unwrap();
    let path = config(
        &dir,
        "command = \"solve\"\nmeshh = 3\n[problem]\nname = \"P-LIN\"",
    );
    let (code, _, err) = run(&path);
    assert_eq!(code, 1);
    assert!(err.contains("meshh"), "{err}");

    let path = config(
        &dir,
        "command = \"solve\"\n[problem]\nname = \"P-JUMP\"\n[schedule]\ntau = [0.7, 0.3]",
    );
    let (code, _, err) = run(&path);
    assert_eq!(code, 1);
    assert!(err.contains("ordering constraint"), "{err}");

    let out = binary().arg("validate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn io_failures_exit_with_three() {
    let (code, _, err) = run(Path::new("/nonexistent/run.toml"));
    assert_eq!(code, 3, "{err}");

    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("out"),
        "a file where the output directory should be",
    )
    .unwrap();
    let path = config(&dir, "command = \"solve\"\n[problem]\nname = \"P-LIN\"");
    let (code, _, err) = run(&path);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn problems_lists_every_builtin() {
    let out = binary().arg("problems").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in impulse_volterra::problems::BUILTIN_NAMES {
        assert!(text.contains(name));
    }
}

#[test]
fn shipped_configs_are_valid() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            impulse_volterra_cli::load_config(&path)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 4);
}
