//! Acceptance suite: one pass/fail line per criterion, with its runtime.
//!
//! Runs without the test harness so the lines always reach the output; the
//! process exits non-zero if any criterion fails.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use impulse_volterra::analysis::Analysis;
use impulse_volterra::gradient::{costate_p, grad_tau, gradient_report, TauTerms};
use impulse_volterra::linear::{build_gamma, gamma_by_paths, ImpulseArray};
use impulse_volterra::ode::{
    ode_grad_tau, psi_costate, psi_residual, rho_matrix, rho_residual, RhoMatrix,
};
use impulse_volterra::optimize::{optimize, OptimizeOptions};
use impulse_volterra::oracle::{grid_search, FdSteps, GridSpec};
use impulse_volterra::problems::{builtin, Builtin};
use impulse_volterra::{build_mesh, jump_residual, solve_state, Matrix, SolveOptions};
use impulse_volterra_cli::checks::run_checks;
use impulse_volterra_cli::config::CheckTolerances;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

/// Name, runtime limit and check.
type Criterion = (&'static str, Duration, fn() -> Verdict);

fn load(name: &str) -> Builtin {
    builtin(name, &Default::default()).expect("built-in problem")
}

fn analysis(b: &Builtin, m: usize) -> Analysis<'_> {
    let mesh = build_mesh(&b.schedule, m).expect("mesh");
    Analysis::new(
        b.problem.as_ref(),
        &b.schedule,
        &b.controls,
        mesh,
        &SolveOptions::default(),
    )
    .expect("solve")
}

fn require(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// P-LIN against `e^{0.5}`: error below `10⁻⁴` at `M = 200`, ratios in `[3.5, 4.5]`.
fn state_convergence() -> Verdict {
    let b = load("P-LIN");
    let exact = 0.5f64.exp();
    let error = |m: usize| {
        let mesh = build_mesh(&b.schedule, m).unwrap();
        let y = solve_state(
            b.problem.as_ref(),
            &b.schedule,
            &b.controls,
            &mesh,
            &SolveOptions::default(),
        )
        .unwrap();
        (y.states().last().unwrap()[0] - exact).abs()
    };
    let (e100, e200, e400) = (error(100), error(200), error(400));
    let (r1, r2) = (e100 / e200, e200 / e400);
    let detail = format!("|y(1) - e^0.5| = {e200:.2e} at M=200, ratios {r1:.3}, {r2:.3}");
    require(
        e200 < 1e-4 && (3.5..=4.5).contains(&r1) && (3.5..=4.5).contains(&r2),
        detail,
    )
}

/// Jump identity below `10⁻¹²` on P-JUMP and `10⁻¹⁰` on P-FULL.
fn jump_identity() -> Verdict {
    let worst = |name: &str| {
        let b = load(name);
        let a = analysis(&b, 200);
        jump_residual(b.problem.as_ref(), &b.schedule, &b.controls, &a.trajectory)
            .into_iter()
            .fold(0.0, f64::max)
    };
    let (jump, full) = (worst("P-JUMP"), worst("P-FULL"));
    require(
        jump < 1e-12 && full < 1e-10,
        format!("P-JUMP {jump:.2e}, P-FULL {full:.2e}"),
    )
}

/// Series and path-sum `Γ` agree exactly on 100 random strictly lower `Λ`.
///
/// Entries are multiples of `1/8` so every product and sum is exact in
/// floating point and "exact equality" can be tested literally.
fn gamma_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let n_imp = rng.random_range(0..=6usize);
        let dim = rng.random_range(1..=3usize);
        let mut lambda = ImpulseArray::zeros(n_imp + 1, dim);
        for i in 2..=n_imp + 1 {
            for j in 1..i {
                let block =
                    Matrix::from_fn(dim, dim, |_, _| rng.random_range(-16..=16i32) as f64 / 8.0);
                lambda.set(i, j, block);
            }
        }
        let paths = gamma_by_paths(&lambda).map_err(|e| e.to_string())?;
        worst = worst.max(build_gamma(&lambda).max_abs_diff(&paths));
    }
    require(
        worst == 0.0,
        format!("largest difference {worst:e} over 100 arrays"),
    )
}

/// Resolvent, adjoint and co-state residuals below `10⁻⁸`, duality gap below `10⁻⁸`.
fn resolvent_and_adjoint() -> Verdict {
    let b = load("P-COUPLED-FULL");
    let a = analysis(&b, 200);
    let tol = CheckTolerances {
        identity: 1e-8,
        duality: 1e-8,
        ..CheckTolerances::for_mesh(200)
    };
    let wanted = [
        "resolvent_identity",
        "resolvent_rows",
        "costate_p",
        "costate_phi",
        "duality",
    ];
    let records = run_checks(&a, None, &tol);
    let mut parts = Vec::new();
    let mut ok = true;
    for name in wanted {
        match records.iter().find(|r| r.name == name) {
            Some(r) => {
                ok &= r.passed;
                parts.push(format!("{name} {:.1e}", r.value));
            }
            None => {
                ok = false;
                parts.push(format!("{name} missing"));
            }
        }
    }
    require(ok, parts.join(", "))
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-6)
}

/// Analytic against central differences at `M = 400`, plus the closed form on P-JUMP.
fn gradient_gold() -> Verdict {
    let steps = FdSteps {
        tau: 1e-4,
        level: 1e-5,
    };
    let mut worst = 0.0_f64;
    for name in ["P-FULL", "P-ODE"] {
        let b = load(name);
        let r = gradient_report(
            b.problem.as_ref(),
            &b.schedule,
            &b.controls,
            400,
            &SolveOptions::default(),
            Some(steps),
        )
        .map_err(|e| e.to_string())?;
        let fd_tau = r.fd_dtau.as_ref().expect("fd columns");
        let fd_a = r.fd_da.as_ref().expect("fd columns");
        for (g, fd) in r
            .dj_dtau
            .iter()
            .zip(fd_tau)
            .chain(r.dj_da.iter().zip(fd_a.iter()))
        {
            worst = worst.max(relative(*g, *fd));
        }
    }
    let b = load("P-JUMP");
    let r = gradient_report(
        b.problem.as_ref(),
        &b.schedule,
        &b.controls,
        400,
        &SolveOptions::default(),
        None,
    )
    .map_err(|e| e.to_string())?;
    let closed = r
        .dj_dtau
        .iter()
        .zip([-1.0, -3.0])
        .fold(0.0_f64, |m, (g, e)| m.max((g - e).abs()));
    require(
        worst < 1e-3 && closed < 1e-6 && r.dj_dtau.len() == 2,
        format!("worst relative error {worst:.2e}, P-JUMP off by {closed:.1e}"),
    )
}

/// ODE-form instant gradient equals the general one; `ψ`, `ρ` residuals below `10⁻⁶`.
fn lift_equivalence() -> Verdict {
    let b = load("P-ODE");
    let ode = b.ode.clone().expect("ode form");
    let a = analysis(&b, 400);
    let p = costate_p(&a);
    let general: Vec<f64> = grad_tau(&a, &p).iter().map(TauTerms::total).collect();
    let psi = psi_costate(&a, p);
    let rhos: Vec<RhoMatrix> = (2..=b.schedule.len() + 1)
        .map(|l| rho_matrix(&a, l))
        .collect();
    let special = ode_grad_tau(ode.as_ref(), &a, &psi, &rhos);
    let gap = general
        .iter()
        .zip(&special)
        .fold(0.0_f64, |m, (g, s)| m.max((g - s).abs()));
    let psi_res = psi_residual(ode.as_ref(), &a, &psi);
    let rho_res = (1..=b.schedule.len() + 1)
        .map(|l| rho_residual(ode.as_ref(), &a, &rho_matrix(&a, l)))
        .fold(0.0, f64::max);
    require(
        gap < 1e-6 && psi_res < 1e-6 && rho_res < 1e-6 && general.len() == special.len(),
        format!("gradient gap {gap:.1e}, psi {psi_res:.1e}, rho {rho_res:.1e}"),
    )
}

/// P-FULL from `τ = (0.4)`, `a = (0.5, 0.5)`: monotone, stationary, and within
/// one grid cell of the 50 × 21² grid-search minimum (both at `M = 50`).
fn optimizer() -> Verdict {
    let b = load("P-FULL");
    let m = 50;
    let options = OptimizeOptions {
        points_per_interval: m,
        ..OptimizeOptions::default()
    };
    let trace = optimize(b.problem.as_ref(), &b.schedule, &b.controls, &options)
        .map_err(|e| e.to_string())?;
    let last = trace.final_record();
    let strict = trace.records.windows(2).all(|w| w[1].cost < w[0].cost);
    let delta = b.schedule.min_gap();
    let grid = GridSpec {
        tau_axes: vec![GridSpec::linspace(delta, 1.0 - delta, 50)],
        level_axes: vec![
            GridSpec::linspace(0.0, 1.0, 21),
            GridSpec::linspace(0.0, 1.0, 21),
        ],
    };
    let found = grid_search(
        b.problem.as_ref(),
        1.0,
        delta,
        &grid,
        m,
        &SolveOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let gap = (last.cost - found.best_cost).abs();
    require(
        trace.converged && strict && last.tau_residual < 1e-4 && last.vi_residual < 1e-4 && gap <= found.neighbor_variation,
        format!(
            "{} iterations, J {:.6} -> {:.6}, |dJ/dtau| {:.1e}, VI {:.1e}, grid gap {:.1e} <= cell {:.1e}",
            last.iteration,
            trace.records[0].cost,
            last.cost,
            last.tau_residual,
            last.vi_residual,
            gap,
            found.neighbor_variation
        ),
    )
}

/// Two consecutive `check` runs on one config leave byte-identical tables.
fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("check.toml");
    fs::write(
        &config,
        "command = \"check\"\n[problem]\nname = \"P-COUPLED-FULL\"\n[mesh]\npoints_per_interval = 50\n[output]\ndir = \"out\"\n",
    )
    .map_err(|e| e.to_string())?;
    let tables = ["checks.csv", "summary.json"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let status = Command::new(env!("CARGO_BIN_EXE_impulse-volterra"))
            .arg("run")
            .arg(&config)
            .output()
            .map_err(|e| e.to_string())?
            .status;
        if !status.success() {
            return Err(format!("check run exited with {status}"));
        }
        let bytes: Vec<Vec<u8>> = tables
            .iter()
            .map(|t| fs::read(dir.path().join("out").join(t)))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        runs.push(bytes);
    }
    let size: usize = runs[0].iter().map(Vec::len).sum();
    require(
        runs[0] == runs[1],
        format!("{} tables, {size} bytes compared", tables.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        (
            "state-solver convergence",
            Duration::from_secs(5),
            state_convergence,
        ),
        ("jump identity", Duration::from_secs(5), jump_identity),
        (
            "gamma path equivalence",
            Duration::from_secs(10),
            gamma_equivalence,
        ),
        (
            "resolvent and adjoint identities",
            Duration::from_secs(30),
            resolvent_and_adjoint,
        ),
        (
            "gradient gold property",
            Duration::from_secs(120),
            gradient_gold,
        ),
        (
            "ODE lift equivalence",
            Duration::from_secs(60),
            lift_equivalence,
        ),
        ("optimizer", Duration::from_secs(300), optimizer),
        ("determinism", Duration::from_secs(60), determinism),
    ];
    let mut failures = 0;
    for (k, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let verdict = check();
        let elapsed = start.elapsed();
        let (pass, detail) = match verdict {
            Ok(d) if elapsed <= limit => (true, d),
            Ok(d) => (false, format!("{d}; over the {}s limit", limit.as_secs())),
            Err(d) => (false, d),
        };
        failures += usize::from(!pass);
        println!(
            "criterion {} {}: {name}: {detail} ({:.2}s)",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failures == 0 {
        println!("acceptance: all 8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} of 8 criteria failed");
        ExitCode::FAILURE
    }
}
