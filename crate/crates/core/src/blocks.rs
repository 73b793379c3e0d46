//! Flat storage for block lower-triangular kernels on the grid and small
//! dense helpers that operate on raw row-major blocks.

use crate::{Matrix, Vector};

/// Blocks `X_pq ∈ R^{n×n}` for `0 ≤ q ≤ p < points`, stored row-major per block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLower {
    points: usize,
    dim: usize,
    data: Vec<f64>,
}

impl BlockLower {
    pub fn zeros(points: usize, dim: usize) -> Self {
        Self {
            points,
            dim,
            data: vec![0.0; points * (points + 1) / 2 * dim * dim],
        }
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn offset(&self, p: usize, q: usize) -> usize {
        debug_assert!(q <= p && p < self.points);
        (p * (p + 1) / 2 + q) * self.dim * self.dim
    }

    pub fn block(&self, p: usize, q: usize) -> &[f64] {
        let o = self.offset(p, q);
        &self.data[o..o + self.dim * self.dim]
    }

    pub fn block_mut(&mut self, p: usize, q: usize) -> &mut [f64] {
        let o = self.offset(p, q);
        let len = self.dim * self.dim;
        &mut self.data[o..o + len]
    }

    /// Blocks `X_p0 … X_pp` as one contiguous slice.
    pub fn row(&self, p: usize) -> &[f64] {
        let start = self.offset(p, 0);
        &self.data[start..start + (p + 1) * self.dim * self.dim]
    }

    pub fn row_mut(&mut self, p: usize) -> &mut [f64] {
        let start = self.offset(p, 0);
        let len = (p + 1) * self.dim * self.dim;
        &mut self.data[start..start + len]
    }

    pub fn get(&self, p: usize, q: usize) -> Matrix {
        Matrix::from_row_slice(self.dim, self.dim, self.block(p, q))
    }

    pub fn set(&mut self, p: usize, q: usize, m: &Matrix) {
        write_matrix(self.block_mut(p, q), m);
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// Copies `m` into a row-major slice.
pub fn write_matrix(out: &mut [f64], m: &Matrix) {
    let n = m.ncols();
    for r in 0..m.nrows() {
        for c in 0..n {
            out[r * n + c] = m[(r, c)];
        }
    }
}

/// `acc += B x` for a row-major `n×n` block.
#[inline]
pub fn gemv_acc(acc: &mut [f64], block: &[f64], x: &[f64]) {
    let n = x.len();
    for (r, out) in acc.iter_mut().enumerate() {
        let row = &block[r * n..(r + 1) * n];
        *out += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `acc += Bᵀ x` for a row-major `n×n` block.
#[inline]
pub fn gemv_t_acc(acc: &mut [f64], block: &[f64], x: &[f64]) {
    let n = x.len();
    for (r, &xr) in x.iter().enumerate() {
        let row = &block[r * n..(r + 1) * n];
        for (out, a) in acc.iter_mut().zip(row) {
            *out += a * xr;
        }
    }
}

/// `acc += scale · A B` for row-major `n×n` blocks.
#[inline]
pub fn gemm_acc(acc: &mut [f64], a: &[f64], b: &[f64], n: usize, scale: f64) {
    for r in 0..n {
        for k in 0..n {
            let s = scale * a[r * n + k];
            if s == 0.0 {
                continue;
            }
            let brow = &b[k * n..(k + 1) * n];
            let out = &mut acc[r * n..(r + 1) * n];
            for (o, v) in out.iter_mut().zip(brow) {
                *o += s * v;
            }
        }
    }
}

/// Flattens grid vectors into one `points·n` buffer.
pub fn flatten(values: &[Vector]) -> Vec<f64> {
    values.iter().flat_map(|v| v.iter().copied()).collect()
}

/// Splits a `points·n` buffer into grid vectors.
pub fn unflatten(values: &[f64], dim: usize) -> Vec<Vector> {
    values.chunks(dim).map(Vector::from_column_slice).collect()
}
