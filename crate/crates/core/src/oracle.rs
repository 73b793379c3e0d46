//! Independent oracles: central finite differences of full nonlinear
//! re-solves, a truncated Neumann series for the resolvent, and a dense grid
//! search over `(τ, a)`.

use crate::blocks::{gemm_acc, BlockLower};
use crate::linear::LinearSystem;
use crate::mesh::{build_mesh, Mesh};
use crate::problem::ImpulsiveProblem;
use crate::schedule::{ControlVector, ImpulseSchedule};
use crate::state::{solve_cost, solve_state, SolveOptions};
use crate::{Error, Matrix, Result, Vector};

/// Central-difference steps for the instants and the levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSteps {
    pub tau: f64,
    pub level: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        Self {
            tau: 1e-4,
            level: 1e-5,
        }
    }
}

/// Smallest distance by which any `τ_j` can move before breaking the schedule constraints.
pub fn schedule_margin(schedule: &ImpulseSchedule) -> f64 {
    let n = schedule.len();
    let delta = schedule.min_gap();
    (1..=n)
        .map(|j| {
            let below = if j == 1 {
                schedule.boundary(1) - delta
            } else {
                schedule.boundary(j) - schedule.boundary(j - 1) - delta
            };
            let above = if j == n {
                schedule.horizon() - delta - schedule.boundary(j)
            } else {
                schedule.boundary(j + 1) - schedule.boundary(j) - delta
            };
            below.min(above)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Central differences of `J` over every `τ_j` (uniform mesh rebuilt for each
/// perturbed schedule) and every level component (same mesh).
pub fn fd_gradient(
    problem: &dyn ImpulsiveProblem,
    schedule: &ImpulseSchedule,
    controls: &ControlVector,
    points_per_interval: usize,
    steps: FdSteps,
    options: &SolveOptions,
) -> Result<(Vec<f64>, Matrix)> {
    let margin = schedule_margin(schedule);
    if !schedule.is_empty() && steps.tau >= margin {
        return Err(Error::StepTooLarge {
            h: steps.tau,
            margin,
        });
    }
    let h = steps.tau;
    let mut d_tau = Vec::with_capacity(schedule.len());
    for j in 1..=schedule.len() {
        let tau = schedule.boundary(j);
        let plus = solve_cost(
            problem,
            &schedule.with_time(j, tau + h)?,
            controls,
            points_per_interval,
            options,
        )?;
        let minus = solve_cost(
            problem,
            &schedule.with_time(j, tau - h)?,
            controls,
            points_per_interval,
            options,
        )?;
        d_tau.push((plus - minus) / (2.0 * h));
    }

    let h = steps.level;
    let mesh = build_mesh(schedule, points_per_interval)?;
    let m = controls.control_dim();
    let mut d_a = Matrix::zeros(controls.len(), m);
    for i in 0..controls.len() {
        for k in 0..m {
            let cost = |sign: f64| -> Result<f64> {
                let mut c = controls.clone();
                c.levels_mut()[i][k] += sign * h;
                let y = solve_state(problem, schedule, &c, &mesh, options)?;
                Ok(crate::state::evaluate_cost(
                    problem, schedule, &c, &y, &mesh,
                ))
            };
            d_a[(i, k)] = (cost(1.0)? - cost(-1.0)?) / (2.0 * h);
        }
    }
    Ok((d_tau, d_a))
}

/// Central difference of the grid solution with only the node of `τ_j` moved.
///
/// Returns the difference quotient at every grid point; entries before
/// `τ_j^-` vanish by causality, and the entry at `τ_j^-` approximates `D_j`.
pub fn fd_state_variation(
    problem: &dyn ImpulsiveProblem,
    schedule: &ImpulseSchedule,
    controls: &ControlVector,
    mesh: &Mesh,
    j: usize,
    h: f64,
    options: &SolveOptions,
) -> Result<Vec<Vector>> {
    let tau = schedule.boundary(j);
    let solve = |sign: f64| {
        let s = schedule.with_time(j, tau + sign * h)?;
        let shifted = mesh.with_shifted_impulse(j, sign * h)?;
        solve_state(problem, &s, controls, &shifted, options)
    };
    let plus = solve(1.0)?;
    let minus = solve(-1.0)?;
    Ok(plus
        .states()
        .iter()
        .zip(minus.states())
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect())
}

/// `R ≈ Σ_{k=1}^{terms} K̃_k`, where the iterated kernels are the powers of
/// `A = w ⊙ K̃` divided by the quadrature weights.
pub fn neumann_resolvent(system: &LinearSystem, terms: usize) -> BlockLower {
    let a = system.weighted_kernel();
    let points = a.points();
    let n = a.dim();
    let nn = n * n;
    let mut power = a.clone();
    let mut sum = a.clone();
    for _ in 1..terms {
        let mut next = BlockLower::zeros(points, n);
        for p in 0..points {
            for r in 0..=p {
                let apr = power.block(p, r).to_vec();
                for q in 0..=r {
                    gemm_acc(next.block_mut(p, q), &apr, a.block(r, q), n, 1.0);
                }
            }
        }
        for p in 0..points {
            for q in 0..=p {
                let src = next.block(p, q).to_vec();
                sum.block_mut(p, q)
                    .iter_mut()
                    .zip(&src)
                    .for_each(|(s, v)| *s += v);
            }
        }
        power = next;
    }
    let mesh = system.mesh();
    let mut r = BlockLower::zeros(points, n);
    for p in 0..points {
        for q in 0..=p {
            let w = mesh.quadrature_weight(p, q);
            let block = r.block_mut(p, q);
            if w == 0.0 {
                block.copy_from_slice(system.kernel_tilde().block(p, q));
            } else {
                for (e, v) in block.iter_mut().zip(sum.block(p, q)) {
                    *e = v / w;
                }
            }
        }
    }
    debug_assert_eq!(r.block(0, 0).len(), nn);
    r
}

/// Axes of a dense grid over `(τ, a)`.
#[derive(Debug, Clone)]
pub struct GridSpec {
    /// One axis per impulse instant.
    pub tau_axes: Vec<Vec<f64>>,
    /// One axis per level component, level-major.
    pub level_axes: Vec<Vec<f64>>,
}

impl GridSpec {
    /// `count` evenly spaced values on `[lo, hi]`.
    pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
        if count == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best_cost: f64,
    pub best_tau: Vec<f64>,
    pub best_levels: Vec<f64>,
    /// Largest `|J(neighbour) − J(best)|` over the adjacent grid cells.
    pub neighbor_variation: f64,
    pub evaluations: usize,
}

/// Evaluates `J` on every grid point; infeasible schedules are skipped.
pub fn grid_search(
    problem: &dyn ImpulsiveProblem,
    horizon: f64,
    min_gap: f64,
    grid: &GridSpec,
    points_per_interval: usize,
    options: &SolveOptions,
) -> Result<GridSearchResult> {
    let m = problem.control_dim();
    let axes: Vec<&Vec<f64>> = grid.tau_axes.iter().chain(grid.level_axes.iter()).collect();
    let dims: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    if dims.contains(&0) {
        return Err(Error::InvalidArgument("grid axes must be non-empty".into()));
    }
    let total: usize = dims.iter().product();
    let n_tau = grid.tau_axes.len();
    let mut costs = vec![f64::INFINITY; total];
    let mut evaluations = 0;
    let mut index = vec![0usize; dims.len()];
    for cost in costs.iter_mut() {
        let coords: Vec<f64> = index.iter().zip(&axes).map(|(&k, a)| a[k]).collect();
        if let Ok(schedule) = ImpulseSchedule::new(coords[..n_tau].to_vec(), horizon, min_gap) {
            let controls = ControlVector::from_flat(&coords[n_tau..], m)?;
            *cost = solve_cost(problem, &schedule, &controls, points_per_interval, options)?;
            evaluations += 1;
        }
        for d in (0..dims.len()).rev() {
            index[d] += 1;
            if index[d] < dims[d] {
                break;
            }
            index[d] = 0;
        }
    }
    let (best, &best_cost) = costs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::InvalidArgument("empty grid".into()))?;
    if !best_cost.is_finite() {
        return Err(Error::InvalidArgument("no feasible grid point".into()));
    }
    let mut best_index = vec![0usize; dims.len()];
    let mut rest = best;
    for d in (0..dims.len()).rev() {
        best_index[d] = rest % dims[d];
        rest /= dims[d];
    }
    let mut neighbor_variation = 0.0_f64;
    let neighbours = 3usize.pow(dims.len() as u32);
    for code in 0..neighbours {
        let mut c = code;
        let mut flat = 0usize;
        let mut valid = true;
        let mut moved = false;
        for d in 0..dims.len() {
            let offset = (c % 3) as isize - 1;
            c /= 3;
            moved |= offset != 0;
            let k = best_index[d] as isize + offset;
            if k < 0 || k >= dims[d] as isize {
                valid = false;
                break;
            }
            flat = flat * dims[d] + k as usize;
        }
        if valid && moved && costs[flat].is_finite() {
            neighbor_variation = neighbor_variation.max((costs[flat] - best_cost).abs());
        }
    }
    let coords: Vec<f64> = best_index.iter().zip(&axes).map(|(&k, a)| a[k]).collect();
    Ok(GridSearchResult {
        best_cost,
        best_tau: coords[..n_tau].to_vec(),
        best_levels: coords[n_tau..].to_vec(),
        neighbor_variation,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::builtin;
    use crate::testing::Toy;

    #[test]
    fn margin_is_the_tightest_slack() {
        let s = ImpulseSchedule::new(vec![0.3, 0.35, 0.9], 1.0, 0.01).unwrap();
        assert!((schedule_margin(&s) - 0.04).abs() < 1e-12);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let b = builtin("P-FULL", &Default::default()).unwrap();
        let steps = FdSteps {
            tau: 0.7,
            level: 1e-5,
        };
        assert!(matches!(
            fd_gradient(
                b.problem.as_ref(),
                &b.schedule,
                &b.controls,
                10,
                steps,
                &SolveOptions::default()
            ),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn costless_problem_has_zero_differences() {
        let toy = Toy {
            rate: 0.5,
            gain: 1.0,
            initial: 1.0,
            step: 0.2,
            coupling: 0.3,
            ..Toy::default()
        };
        let s = ImpulseSchedule::new(vec![0.3, 0.7], 1.0, 0.01).unwrap();
        let c = ControlVector::from_scalars(&[0.1, 0.2, 0.3]).unwrap();
        let (dt, da) = fd_gradient(
            &toy,
            &s,
            &c,
            20,
            FdSteps::default(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(dt.iter().all(|g| *g == 0.0));
        assert!(da.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn counting_jumps_by_differences() {
        let b = builtin("P-JUMP", &Default::default()).unwrap();
        let (dt, _) = fd_gradient(
            b.problem.as_ref(),
            &b.schedule,
            &b.controls,
            20,
            FdSteps::default(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!((dt[0] + 1.0).abs() < 1e-6);
        assert!((dt[1] + 3.0).abs() < 1e-6);
    }

    #[test]
    fn variation_is_causal() {
        let b = builtin("P-COUPLED-FULL", &Default::default()).unwrap();
        let mesh = build_mesh(&b.schedule, 20).unwrap();
        let d = fd_state_variation(
            b.problem.as_ref(),
            &b.schedule,
            &b.controls,
            &mesh,
            2,
            1e-5,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(d[..mesh.left_point(2)]
            .iter()
            .all(|v| v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn linspace_endpoints() {
        assert_eq!(
            GridSpec::linspace(0.0, 1.0, 5),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert_eq!(GridSpec::linspace(0.0, 1.0, 1), vec![0.5]);
    }

    #[test]
    fn grid_search_finds_the_quadratic_minimum() {
        // J = ∫ u², minimized by zero levels for every τ
        let toy = Toy {
            level_weight: 1.0,
            ..Toy::default()
        };
        let grid = GridSpec {
            tau_axes: vec![GridSpec::linspace(0.2, 0.8, 4)],
            level_axes: vec![
                GridSpec::linspace(-1.0, 1.0, 5),
                GridSpec::linspace(-1.0, 1.0, 5),
            ],
        };
        let r = grid_search(&toy, 1.0, 0.01, &grid, 4, &SolveOptions::default()).unwrap();
        assert_eq!(r.evaluations, 100);
        assert_eq!(r.best_cost, 0.0);
        assert_eq!(r.best_levels, vec![0.0, 0.0]);
        assert!(r.neighbor_variation > 0.0);
    }

    #[test]
    fn infeasible_grid_points_are_skipped() {
        let toy = Toy {
            level_weight: 1.0,
            ..Toy::default()
        };
        let grid = GridSpec {
            tau_axes: vec![vec![0.2, 0.6], vec![0.4, 0.5]],
            level_axes: vec![vec![0.0]; 3],
        };
        let r = grid_search(&toy, 1.0, 0.01, &grid, 4, &SolveOptions::default()).unwrap();
        assert_eq!(r.evaluations, 2);
    }
}
