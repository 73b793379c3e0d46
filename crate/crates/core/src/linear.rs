//! Linear impulsive Volterra equations
//! `y(t) = η(t) + ∫_0^t K(t,s) y(s) ds + Σ_{i: τ_i<t} λ_i(t) y(τ_i^-)`.
//!
//! The jump couplings are collected in the block array `Λ_ij = λ_j(τ_i^-)`
//! (extended with the row `i = N + 1` at `T^-`), whose path sums
//! `Γ = Λ + … + Λ^N` resolve the left limits: `y(τ^-) = (I + Γ) u` where `u`
//! is the part of `y(τ^-)` produced by the forcing and the integral. Feeding
//! this back gives a lifted Volterra equation with kernel `K̃` and forcing
//! `η̃` that no longer references left limits, which is then solved by forward
//! substitution on the grid, or through its discrete resolvent.

use crate::blocks::{gemm_acc, gemv_acc, gemv_t_acc, write_matrix, BlockLower};
use crate::mesh::Mesh;
use crate::problem::ImpulsiveProblem;
use crate::schedule::{ControlVector, ImpulseSchedule};
use crate::state::{history, PiecewiseTrajectory};
use crate::{Error, Matrix, Result, Vector};

/// Square array of `n×n` blocks indexed `1..=size` in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseArray {
    size: usize,
    dim: usize,
    blocks: Vec<Matrix>,
}

/// `Λ_ij = λ_j(τ_i^-)` for `j < i ≤ N + 1`.
pub type LambdaArray = ImpulseArray;
/// `Γ = Σ_{k=1}^{N} Λ^k`.
pub type GammaArray = ImpulseArray;

impl ImpulseArray {
    pub fn zeros(size: usize, dim: usize) -> Self {
        Self {
            size,
            dim,
            blocks: vec![Matrix::zeros(dim, dim); size * size],
        }
    }

    pub fn identity(size: usize, dim: usize) -> Self {
        let mut out = Self::zeros(size, dim);
        for i in 1..=size {
            out.set(i, i, Matrix::identity(dim, dim));
        }
        out
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> &Matrix {
        &self.blocks[(i - 1) * self.size + (j - 1)]
    }

    pub fn set(&mut self, i: usize, j: usize, m: Matrix) {
        assert_eq!(
            (m.nrows(), m.ncols()),
            (self.dim, self.dim),
            "block dimension"
        );
        self.blocks[(i - 1) * self.size + (j - 1)] = m;
    }

    /// True when every block on or above the diagonal is exactly zero.
    pub fn is_strictly_lower(&self) -> bool {
        (1..=self.size).all(|i| (i..=self.size).all(|j| self.get(i, j).iter().all(|&x| x == 0.0)))
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|&x| x == 0.0))
    }

    /// Block product `(self · other)_ij = Σ_k self_ik other_kj`.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!((self.size, self.dim), (other.size, other.dim));
        let mut out = Self::zeros(self.size, self.dim);
        for i in 1..=self.size {
            for j in 1..=self.size {
                let mut acc = Matrix::zeros(self.dim, self.dim);
                for k in 1..=self.size {
                    acc += self.get(i, k) * other.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.blocks.iter_mut().zip(&other.blocks) {
            *a += b;
        }
        out
    }

    /// Largest absolute entry of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Evaluates `Λ_ij = ∂g(τ_i^-, …)/∂y_j` for `j < i`, with row `N + 1` taken at `T^-`.
pub fn build_lambda(
    problem: &dyn ImpulsiveProblem,
    schedule: &ImpulseSchedule,
    controls: &ControlVector,
    trajectory: &PiecewiseTrajectory,
) -> LambdaArray {
    let n_imp = schedule.len();
    let left = trajectory.left_limits();
    let mut lambda = ImpulseArray::zeros(n_imp + 1, problem.state_dim());
    for i in 2..=n_imp + 1 {
        let t = schedule.boundary(i);
        let h = history(schedule, controls, &left, i - 1);
        for j in 1..i {
            lambda.set(i, j, problem.jump_dy(t, &h, j));
        }
    }
    lambda
}

/// `Γ = Λ + Λ² + … + Λ^N` for a strictly lower-triangular `Λ` of size `N + 1`.
pub fn build_gamma(lambda: &LambdaArray) -> GammaArray {
    let mut gamma = ImpulseArray::zeros(lambda.size(), lambda.dim());
    if lambda.size() < 2 {
        return gamma;
    }
    let mut power = lambda.clone();
    gamma = gamma.add(&power);
    for _ in 2..lambda.size() {
        power = power.mul(lambda);
        gamma = gamma.add(&power);
    }
    gamma
}

/// `Γ` as the sum over increasing index chains `j < k_1 < … < k_α < i` of
/// `Λ_{i k_α} ⋯ Λ_{k_1 j}`. Exponential in `N`; refused above `N = 12`.
pub fn gamma_by_paths(lambda: &LambdaArray) -> Result<GammaArray> {
    let n_imp = lambda.size().saturating_sub(1);
    if n_imp > 12 {
        return Err(Error::PathEnumerationTooLarge(n_imp));
    }
    let mut gamma = ImpulseArray::zeros(lambda.size(), lambda.dim());
    fn walk(
        lambda: &LambdaArray,
        gamma: &mut GammaArray,
        origin: usize,
        at: usize,
        product: &Matrix,
    ) {
        for next in at + 1..=lambda.size() {
            let extended = lambda.get(next, at) * product;
            let slot = (next - 1) * gamma.size + (origin - 1);
            gamma.blocks[slot] += &extended;
            walk(lambda, gamma, origin, next, &extended);
        }
    }
    let eye = Matrix::identity(lambda.dim(), lambda.dim());
    for j in 1..=lambda.size() {
        walk(lambda, &mut gamma, j, j, &eye);
    }
    Ok(gamma)
}

/// Discrete linear impulsive system on a mesh together with its lifted form.
///
/// `kernel` holds `K_pq` for `q ≤ p`; `lambda_at[p]` holds `λ_1(t_p)…λ_I(t_p)`
/// for the interval `I` of grid point `p`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    mesh: Mesh,
    dim: usize,
    kernel: BlockLower,
    lambda_at: Vec<Vec<Matrix>>,
    lambda: LambdaArray,
    gamma: GammaArray,
    gamma_hat: ImpulseArray,
    couplings: Vec<Vec<Matrix>>,
    kernel_tilde: BlockLower,
    diag_inv: Vec<f64>,
}

impl LinearSystem {
    /// Assembles the system from grid kernel blocks and jump couplings.
    pub fn new(mesh: &Mesh, kernel: BlockLower, lambda_at: Vec<Vec<Matrix>>) -> Result<Self> {
        let points = mesh.point_count();
        let dim = kernel.dim();
        if kernel.points() != points || lambda_at.len() != points {
            return Err(Error::Dimension(
                "kernel or couplings do not match the mesh".into(),
            ));
        }
        for (p, l) in lambda_at.iter().enumerate() {
            if l.len() != mesh.interval(p) {
                return Err(Error::Dimension(format!(
                    "grid point {p} needs {} coupling blocks, got {}",
                    mesh.interval(p),
                    l.len()
                )));
            }
        }
        let n_imp = mesh.impulse_count();
        let mut lambda = ImpulseArray::zeros(n_imp + 1, dim);
        for i in 2..=n_imp + 1 {
            let p = mesh.left_point(i);
            for j in 1..i {
                lambda.set(i, j, lambda_at[p][j - 1].clone());
            }
        }
        let gamma = build_gamma(&lambda);
        let gamma_hat = gamma.add(&ImpulseArray::identity(n_imp + 1, dim));

        let couplings: Vec<Vec<Matrix>> = (0..points)
            .map(|p| {
                let top = mesh.interval(p);
                (1..=top)
                    .map(|l| {
                        let mut c = Matrix::zeros(dim, dim);
                        for i in l..=top {
                            c += &lambda_at[p][i - 1] * gamma_hat.get(i, l);
                        }
                        c
                    })
                    .collect()
            })
            .collect();

        let mut kernel_tilde = kernel.clone();
        let nn = dim * dim;
        let mut scratch = vec![0.0; nn];
        for p in 0..points {
            for (l_idx, c) in couplings[p].iter().enumerate() {
                let lp = mesh.left_point(l_idx + 1);
                write_matrix(&mut scratch, c);
                for q in 0..=lp {
                    gemm_acc(
                        kernel_tilde.block_mut(p, q),
                        &scratch,
                        kernel.block(lp, q),
                        dim,
                        1.0,
                    );
                }
            }
        }

        let mut diag_inv = vec![0.0; points * nn];
        for p in 0..points {
            let d = mesh.diagonal_weight(p);
            let m = Matrix::identity(dim, dim) - d * kernel_tilde.get(p, p);
            let inv = m.try_inverse().ok_or(Error::SingularBlock { point: p })?;
            write_matrix(&mut diag_inv[p * nn..(p + 1) * nn], &inv);
        }

        Ok(Self {
            mesh: mesh.clone(),
            dim,
            kernel,
            lambda_at,
            lambda,
            gamma,
            gamma_hat,
            couplings,
            kernel_tilde,
            diag_inv,
        })
    }

    /// Linearizes the state equation around a solved trajectory:
    /// `K_pq = f_y(t_p, t_q, y_q, a_{I(q)})`, `λ_i(t_p) = g_{y_i}(t_p, …)`.
    pub fn linearize(
        problem: &dyn ImpulsiveProblem,
        schedule: &ImpulseSchedule,
        controls: &ControlVector,
        mesh: &Mesh,
        trajectory: &PiecewiseTrajectory,
    ) -> Result<Self> {
        let points = mesh.point_count();
        let dim = problem.state_dim();
        let mut kernel = BlockLower::zeros(points, dim);
        for p in 0..points {
            let t = mesh.time(p);
            for q in 0..=p {
                let k = problem.kernel_dy(
                    t,
                    mesh.time(q),
                    trajectory.at(q),
                    controls.level(mesh.interval(q)),
                );
                kernel.set(p, q, &k);
            }
        }
        let left = trajectory.left_limits();
        let lambda_at = (0..points)
            .map(|p| {
                let top = mesh.interval(p);
                let h = history(schedule, controls, &left, top);
                (1..=top)
                    .map(|i| problem.jump_dy(mesh.time(p), &h, i))
                    .collect()
            })
            .collect();
        Self::new(mesh, kernel, lambda_at)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kernel(&self) -> &BlockLower {
        &self.kernel
    }

    pub fn kernel_tilde(&self) -> &BlockLower {
        &self.kernel_tilde
    }

    /// `λ_i(t_p)` for `1 ≤ i ≤ I(p)`.
    pub fn coupling(&self, p: usize, i: usize) -> &Matrix {
        &self.lambda_at[p][i - 1]
    }

    pub fn lambda(&self) -> &LambdaArray {
        &self.lambda
    }

    pub fn gamma(&self) -> &GammaArray {
        &self.gamma
    }

    /// `I + Γ`, the map from the integral parts `u(τ_ℓ^-)` to the left limits.
    pub fn gamma_hat(&self) -> &ImpulseArray {
        &self.gamma_hat
    }

    /// `η̃(t_p) = η(t_p) + Σ_{ℓ ≤ I(p)} Σ_{i=ℓ}^{I(p)} λ_i(t_p) (I + Γ)_iℓ η(τ_ℓ^-)`.
    pub fn lift_forcing(&self, eta: &[Vector]) -> Vec<Vector> {
        (0..self.mesh.point_count())
            .map(|p| {
                let mut out = eta[p].clone();
                for (l_idx, c) in self.couplings[p].iter().enumerate() {
                    out += c * &eta[self.mesh.left_point(l_idx + 1)];
                }
                out
            })
            .collect()
    }

    /// Solves `y = η̃ + A y` with `A_pq = w_pq K̃_pq`, by forward substitution.
    pub fn solve_lifted(&self, eta_tilde: &[Vector]) -> Vec<Vector> {
        let n = self.dim;
        let nn = n * n;
        let points = self.mesh.point_count();
        let mut weighted = vec![0.0; points * n];
        let mut out = Vec::with_capacity(points);
        let mut acc = vec![0.0; n];
        for p in 0..points {
            acc.copy_from_slice(eta_tilde[p].as_slice());
            let row = self.kernel_tilde.row(p);
            for q in 0..p {
                gemv_acc(
                    &mut acc,
                    &row[q * nn..(q + 1) * nn],
                    &weighted[q * n..(q + 1) * n],
                );
            }
            let mut y = vec![0.0; n];
            gemv_acc(&mut y, &self.diag_inv[p * nn..(p + 1) * nn], &acc);
            let c = self.mesh.weight(p);
            for (w, v) in weighted[p * n..(p + 1) * n].iter_mut().zip(&y) {
                *w = c * v;
            }
            out.push(Vector::from_vec(y));
        }
        out
    }

    /// Solves the linear impulsive equation with forcing `η`.
    pub fn solve(&self, eta: &[Vector]) -> Vec<Vector> {
        self.solve_lifted(&self.lift_forcing(eta))
    }

    /// Adjoint solve: the row function `z` with `⟨ζ, y⟩ = ⟨z, η̃⟩` in the
    /// trapezoid inner product for every lifted forcing `η̃`.
    ///
    /// `z` satisfies `z(t_q) = ζ(t_q) + Σ_{r ≥ q} v_rq z(t_r) K̃_rq` where `v_rq`
    /// are the trapezoid weights over `[t_q, T]` paired with the forward scheme.
    pub fn adjoint(&self, zeta: &[Vector]) -> Vec<Vector> {
        let n = self.dim;
        let nn = n * n;
        let points = self.mesh.point_count();
        let mut acc = vec![0.0; points * n];
        let mut out = vec![Vector::zeros(n); points];
        for q in (0..points).rev() {
            let mut rhs: Vec<f64> = zeta[q].iter().copied().collect();
            for (r, a) in rhs.iter_mut().zip(&acc[q * n..(q + 1) * n]) {
                *r += a;
            }
            let mut z = vec![0.0; n];
            gemv_t_acc(&mut z, &self.diag_inv[q * nn..(q + 1) * nn], &rhs);
            let c = self.mesh.weight(q);
            let w: Vec<f64> = z.iter().map(|v| c * v).collect();
            let row = self.kernel_tilde.row(q);
            for s in 0..q {
                gemv_t_acc(&mut acc[s * n..(s + 1) * n], &row[s * nn..(s + 1) * nn], &w);
            }
            out[q] = Vector::from_vec(z);
        }
        out
    }

    /// `A_pq = w_pq K̃_pq`.
    pub fn weighted_kernel(&self) -> BlockLower {
        let mut a = self.kernel_tilde.clone();
        for p in 0..self.mesh.point_count() {
            for q in 0..=p {
                let w = self.mesh.quadrature_weight(p, q);
                a.block_mut(p, q).iter_mut().for_each(|x| *x *= w);
            }
        }
        a
    }

    /// Global discrete resolvent.
    pub fn resolvent(&self) -> DiscreteResolvent {
        self.resolvent_from(0)
    }

    /// Resolvent of the system restricted to grid points `p ≥ start`.
    pub fn resolvent_from(&self, start: usize) -> DiscreteResolvent {
        let n = self.dim;
        let nn = n * n;
        let points = self.mesh.point_count();
        let size = points - start;
        let mut x = BlockLower::zeros(size, n);
        let mut acc = vec![0.0; size * nn];
        let mut ablock = vec![0.0; nn];
        for p in start..points {
            let lp = p - start;
            acc[..(lp + 1) * nn].iter_mut().for_each(|v| *v = 0.0);
            let row = self.kernel_tilde.row(p);
            for r in start..p {
                let w = self.mesh.weight(r);
                ablock.copy_from_slice(&row[r * nn..(r + 1) * nn]);
                let lr = r - start;
                let xrow = x.row(lr);
                for lq in 0..=lr {
                    gemm_acc(
                        &mut acc[lq * nn..(lq + 1) * nn],
                        &ablock,
                        &xrow[lq * nn..(lq + 1) * nn],
                        n,
                        w,
                    );
                }
            }
            let inv = &self.diag_inv[p * nn..(p + 1) * nn];
            let xrow = x.row_mut(lp);
            for lq in 0..lp {
                gemm_acc(
                    &mut xrow[lq * nn..(lq + 1) * nn],
                    inv,
                    &acc[lq * nn..(lq + 1) * nn],
                    n,
                    1.0,
                );
            }
            xrow[lp * nn..(lp + 1) * nn].copy_from_slice(inv);
        }
        DiscreteResolvent::from_inverse(self, start, x)
    }

    /// Row `R(t_p, t_q)`, `q ≤ p`, of the global resolvent, by a backward sweep.
    pub fn resolvent_row(&self, p: usize) -> Vec<Matrix> {
        let n = self.dim;
        let nn = n * n;
        let mut acc = vec![0.0; (p + 1) * nn];
        let mut x = vec![0.0; (p + 1) * nn];
        for i in 0..n {
            acc[p * nn + i * n + i] = 1.0;
        }
        let mut ablock = vec![0.0; nn];
        for q in (0..=p).rev() {
            let xq = {
                let mut out = vec![0.0; nn];
                gemm_acc(
                    &mut out,
                    &acc[q * nn..(q + 1) * nn],
                    &self.diag_inv[q * nn..(q + 1) * nn],
                    n,
                    1.0,
                );
                out
            };
            x[q * nn..(q + 1) * nn].copy_from_slice(&xq);
            let row = self.kernel_tilde.row(q);
            for s in 0..q {
                ablock.copy_from_slice(&row[s * nn..(s + 1) * nn]);
                gemm_acc(
                    &mut acc[s * nn..(s + 1) * nn],
                    &xq,
                    &ablock,
                    n,
                    self.mesh.weight(s),
                );
            }
        }
        (0..=p)
            .map(|q| {
                let mut b = Matrix::from_row_slice(n, n, &x[q * nn..(q + 1) * nn]);
                if q == p {
                    b -= Matrix::identity(n, n);
                }
                let w = self.mesh.quadrature_weight(p, q);
                if w == 0.0 {
                    self.kernel_tilde.get(p, q)
                } else {
                    b / w
                }
            })
            .collect()
    }

    /// Max-norm residual of
    /// `y_p − η_p − Σ_{q≤p} w_pq K_pq y_q − Σ_{i≤I(p)} λ_i(t_p) y(τ_i^-)`.
    pub fn forward_residual(&self, eta: &[Vector], y: &[Vector]) -> f64 {
        let mesh = &self.mesh;
        (0..mesh.point_count())
            .map(|p| {
                let mut r = &y[p] - &eta[p];
                for q in 0..=p {
                    r -= mesh.quadrature_weight(p, q) * self.kernel.get(p, q) * &y[q];
                }
                for (i, l) in self.lambda_at[p].iter().enumerate() {
                    r -= l * &y[mesh.left_point(i + 1)];
                }
                r.amax()
            })
            .fold(0.0, f64::max)
    }

    /// Impulse-coupling functionals `S_i = Σ_{r ≥ τ_i^+} c_r λ_i(t_r)ᵀ z_r`, `i = 1..N`.
    pub fn impulse_moments(&self, z: &[Vector]) -> Vec<Vector> {
        let mesh = &self.mesh;
        (1..=mesh.impulse_count())
            .map(|i| {
                let mut s = Vector::zeros(self.dim);
                for r in mesh.right_point(i)..mesh.point_count() {
                    s += mesh.weight(r) * self.lambda_at[r][i - 1].tr_mul(&z[r]);
                }
                s
            })
            .collect()
    }

    /// Right-hand side of the unlifted adjoint equation at every grid point:
    /// `Σ_{r ≥ q} v_rq K_rqᵀ z_r + Σ_{k: τ_k^- ≥ t_q} K(τ_k^-, t_q)ᵀ Σ_{i=k}^{N} (I + Γ)_ikᵀ S_i`.
    pub fn adjoint_operator(&self, z: &[Vector]) -> Vec<Vector> {
        self.adjoint_operator_with(z, |q| self.mesh.diagonal_weight(q))
    }

    /// Pointwise refinement of an adjoint solution: one application of the
    /// adjoint equation with the trapezoid weight `Δ_q / 2` of `[t_q, T]` on
    /// the diagonal. The discrete adjoint carries the forward scheme's
    /// diagonal weight instead, which is off by `O(Δ)` at `T` and next to
    /// every impulse; the refined values are `O(Δ²)` accurate everywhere and
    /// end at `ζ(T)`.
    pub fn refine_adjoint(&self, zeta: &[Vector], z: &[Vector]) -> Vec<Vector> {
        self.adjoint_operator_with(z, |q| self.mesh.tail_weight(q, q))
            .into_iter()
            .zip(zeta)
            .map(|(op, zq)| op + zq)
            .collect()
    }

    fn adjoint_operator_with(&self, z: &[Vector], diagonal: impl Fn(usize) -> f64) -> Vec<Vector> {
        let mesh = &self.mesh;
        let points = mesh.point_count();
        let n_imp = mesh.impulse_count();
        let moments = self.impulse_moments(z);
        let pulled: Vec<Vector> = (1..=n_imp)
            .map(|k| {
                let mut v = Vector::zeros(self.dim);
                for i in k..=n_imp {
                    v += self.gamma_hat.get(i, k).tr_mul(&moments[i - 1]);
                }
                v
            })
            .collect();
        (0..points)
            .map(|q| {
                let mut out = Vector::zeros(self.dim);
                for r in q..points {
                    let v = if r == q { diagonal(q) } else { mesh.weight(r) };
                    out += v * self.kernel.get(r, q).tr_mul(&z[r]);
                }
                for k in 1..=n_imp {
                    let lk = mesh.left_point(k);
                    if lk >= q {
                        out += self.kernel.get(lk, q).tr_mul(&pulled[k - 1]);
                    }
                }
                out
            })
            .collect()
    }

    /// Max-norm residual of `z − ζ − adjoint_operator(z)`.
    pub fn adjoint_residual(&self, zeta: &[Vector], z: &[Vector]) -> f64 {
        self.adjoint_operator(z)
            .iter()
            .enumerate()
            .map(|(q, op)| (&z[q] - &zeta[q] - op).amax())
            .fold(0.0, f64::max)
    }

    /// Max-norm residual of the row equation satisfied by `R(t_p, ·)`:
    /// `R_pq = K̃_pq + Σ_{q<r≤p} w_pr R_pr K̃_rq + d_q R_pq K̃_qq`, with `K̃`
    /// expanded into `K`, `λ` and `I + Γ`.
    pub fn resolvent_row_residual(&self, p: usize, row: &[Matrix]) -> f64 {
        self.resolvent_row_operator(p, row, |q| self.mesh.diagonal_weight(q))
            .iter()
            .zip(row)
            .map(|(rhs, r)| (r - rhs).amax())
            .fold(0.0, f64::max)
    }

    /// Pointwise refinement of a resolvent row, analogous to
    /// [`Self::refine_adjoint`]: the row equation is applied once with the
    /// trapezoid weights of `[t_q, t_p]`, so that `R(t_p, t_p) = K̃(t_p, t_p)`.
    pub fn refine_resolvent_row(&self, p: usize, row: &[Matrix]) -> Vec<Matrix> {
        let mut refined = self.resolvent_row_operator(p, row, |q| 0.5 * self.mesh.segment(q));
        refined.push(self.kernel.get(p, p));
        refined
    }

    fn resolvent_row_operator(
        &self,
        p: usize,
        row: &[Matrix],
        diagonal: impl Fn(usize) -> f64,
    ) -> Vec<Matrix> {
        let pulled = self.row_pullback(p, row);
        (0..p)
            .map(|q| self.resolvent_row_operator_at(p, row, q, diagonal(q), &pulled))
            .collect()
    }

    /// `Σ_{i=k}^{I(p)} (Σ_{r ≥ τ_i^+} w_pr R_pr λ_i(t_r) + λ_i(t_p)) (I + Γ)_ik` for `k ≤ I(p)`.
    fn row_pullback(&self, p: usize, row: &[Matrix]) -> Vec<Matrix> {
        let mesh = &self.mesh;
        let n = self.dim;
        let top = mesh.interval(p);
        let moments: Vec<Matrix> = (1..=top)
            .map(|i| {
                let mut m = Matrix::zeros(n, n);
                for r in mesh.right_point(i)..=p {
                    m += mesh.quadrature_weight(p, r) * &row[r] * &self.lambda_at[r][i - 1];
                }
                m
            })
            .collect();
        (1..=top)
            .map(|k| {
                let mut m = Matrix::zeros(n, n);
                for i in k..=top {
                    m += (&moments[i - 1] + &self.lambda_at[p][i - 1]) * self.gamma_hat.get(i, k);
                }
                m
            })
            .collect()
    }

    fn resolvent_row_operator_at(
        &self,
        p: usize,
        row: &[Matrix],
        q: usize,
        diagonal: f64,
        pulled: &[Matrix],
    ) -> Matrix {
        let mesh = &self.mesh;
        let top = mesh.interval(p);
        let mut rhs = self.kernel.get(p, q);
        for r in q + 1..=p {
            rhs += mesh.quadrature_weight(p, r) * &row[r] * self.kernel.get(r, q);
        }
        rhs += diagonal * &row[q] * self.kernel.get(q, q);
        for k in 1..=top {
            let lk = mesh.left_point(k);
            if lk >= q {
                rhs += &pulled[k - 1] * self.kernel.get(lk, q);
            }
        }
        rhs
    }
}

/// Discrete resolvent `R` of the lifted kernel, restricted to points `≥ start`.
///
/// With `A = w ⊙ K̃` and `B = (I − A)^{-1} A`, the resolvent is `R_pq = B_pq / w_pq`
/// (and `R_pp = K̃_pp` where the diagonal weight vanishes). `B = A + A B`
/// is the trapezoid form of `R = K̃ + ∫ K̃ R`, so the lifted solution is
/// `y = η̃ + B η̃`.
#[derive(Debug, Clone)]
pub struct DiscreteResolvent {
    start: usize,
    weighted: BlockLower,
    kernel: BlockLower,
}

impl DiscreteResolvent {
    fn from_inverse(system: &LinearSystem, start: usize, mut x: BlockLower) -> Self {
        let n = system.dim;
        let size = x.points();
        for lp in 0..size {
            let b = x.block_mut(lp, lp);
            for i in 0..n {
                b[i * n + i] -= 1.0;
            }
        }
        let mut kernel = BlockLower::zeros(size, n);
        for lp in 0..size {
            let p = lp + start;
            for lq in 0..=lp {
                let q = lq + start;
                let w = system.mesh.quadrature_weight(p, q);
                if w == 0.0 {
                    kernel
                        .block_mut(lp, lq)
                        .copy_from_slice(system.kernel_tilde.block(p, q));
                } else {
                    let src = x.block(lp, lq).to_vec();
                    kernel
                        .block_mut(lp, lq)
                        .iter_mut()
                        .zip(src)
                        .for_each(|(k, b)| *k = b / w);
                }
            }
        }
        Self {
            start,
            weighted: x,
            kernel,
        }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// `R(t_p, t_q)` for `start ≤ q ≤ p`.
    pub fn kernel(&self, p: usize, q: usize) -> Matrix {
        self.kernel.get(p - self.start, q - self.start)
    }

    /// `B_pq = w_pq R_pq`.
    pub fn weighted(&self, p: usize, q: usize) -> Matrix {
        self.weighted.get(p - self.start, q - self.start)
    }

    pub fn weighted_blocks(&self) -> &BlockLower {
        &self.weighted
    }

    /// `y = η̃ + B η̃` on the points `≥ start`.
    pub fn apply(&self, eta_tilde: &[Vector]) -> Vec<Vector> {
        let n = self.weighted.dim();
        let nn = n * n;
        let size = self.weighted.points();
        (0..size)
            .map(|lp| {
                let mut acc = eta_tilde[lp + self.start].as_slice().to_vec();
                let row = self.weighted.row(lp);
                for lq in 0..=lp {
                    gemv_acc(
                        &mut acc,
                        &row[lq * nn..(lq + 1) * nn],
                        eta_tilde[lq + self.start].as_slice(),
                    );
                }
                Vector::from_vec(acc)
            })
            .collect()
    }

    /// `z_q = ζ_q + (1/c_q) Σ_p c_p B_pqᵀ ζ_p` on the points `≥ start`.
    pub fn apply_adjoint(&self, mesh: &Mesh, zeta: &[Vector]) -> Vec<Vector> {
        let n = self.weighted.dim();
        let nn = n * n;
        let size = self.weighted.points();
        let mut acc = vec![0.0; size * n];
        for lp in 0..size {
            let p = lp + self.start;
            let w: Vec<f64> = zeta[p].iter().map(|v| mesh.weight(p) * v).collect();
            let row = self.weighted.row(lp);
            for lq in 0..=lp {
                gemv_t_acc(
                    &mut acc[lq * n..(lq + 1) * n],
                    &row[lq * nn..(lq + 1) * nn],
                    &w,
                );
            }
        }
        (0..size)
            .map(|lq| {
                let q = lq + self.start;
                let c = mesh.weight(q);
                Vector::from_iterator(n, (0..n).map(|k| zeta[q][k] + acc[lq * n + k] / c))
            })
            .collect()
    }

    /// Max-norm residual of `R − K̃ − K̃∘R`, with `(K̃∘R)_pq = (A B)_pq / w_pq`,
    /// over the pairs with a nonzero weight.
    pub fn identity_residual(&self, system: &LinearSystem) -> f64 {
        let n = system.dim;
        let nn = n * n;
        let size = self.weighted.points();
        let mesh = &system.mesh;
        let mut worst = 0.0_f64;
        let mut acc = vec![0.0; nn];
        for lp in 0..size {
            let p = lp + self.start;
            for lq in 0..=lp {
                let q = lq + self.start;
                let w = mesh.quadrature_weight(p, q);
                if w == 0.0 {
                    continue;
                }
                acc.iter_mut().for_each(|v| *v = 0.0);
                for lr in lq..=lp {
                    let r = lr + self.start;
                    gemm_acc(
                        &mut acc,
                        system.kernel_tilde.block(p, r),
                        self.weighted.block(lr, lq),
                        n,
                        mesh.quadrature_weight(p, r),
                    );
                }
                let k = system.kernel_tilde.block(p, q);
                let r = self.kernel.block(lp, lq);
                for e in 0..nn {
                    worst = worst.max((r[e] - k[e] - acc[e] / w).abs());
                }
            }
        }
        worst
    }
}

/// Trapezoid inner product `Σ_p c_p ⟨a_p, b_p⟩` over the whole grid.
pub fn inner_product(mesh: &Mesh, a: &[Vector], b: &[Vector]) -> f64 {
    (0..mesh.point_count())
        .map(|p| mesh.weight(p) * a[p].dot(&b[p]))
        .sum()
}
