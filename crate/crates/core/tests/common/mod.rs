#![allow(dead_code)]

use impulse_volterra::analysis::Analysis;
use impulse_volterra::problems::{builtin, Builtin};
use impulse_volterra::{build_mesh, SolveOptions};

pub fn load(name: &str) -> Builtin {
    builtin(name, &Default::default()).unwrap()
}

pub fn analysis(b: &Builtin, points_per_interval: usize) -> Analysis<'_> {
    let mesh = build_mesh(&b.schedule, points_per_interval).unwrap();
    Analysis::new(
        b.problem.as_ref(),
        &b.schedule,
        &b.controls,
        mesh,
        &SolveOptions::default(),
    )
    .unwrap()
}

/// `|a − b| / max(|b|, floor)`.
pub fn relative(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}
