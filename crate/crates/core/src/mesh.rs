//! Per-interval uniform meshes and the doubled-point grid used by every solver.
//!
//! A [`Mesh`] stores distinct time nodes. Every impulse instant `τ_i` is a
//! node and splits into two *grid points*: the left limit `τ_i^-`, which
//! belongs to interval `i − 1`, and the right limit `τ_i^+`, which belongs to
//! interval `i`. The two are joined by a zero-length segment. With this layout
//! the composite trapezoid weights over any range of grid points integrate
//! piecewise-smooth integrands correctly without special cases.

use crate::schedule::{ImpulseSchedule, Side};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<f64>,
    impulse_nodes: Vec<usize>,
    points_per_interval: usize,
    horizon: f64,
    point_times: Vec<f64>,
    point_interval: Vec<usize>,
    point_node: Vec<usize>,
    left_points: Vec<usize>,
    right_points: Vec<usize>,
    segments: Vec<f64>,
    weights: Vec<f64>,
    diagonal: Vec<f64>,
}

/// Builds the mesh with `M` uniform sub-steps in every interval `[τ_i, τ_{i+1}]`.
pub fn build_mesh(schedule: &ImpulseSchedule, points_per_interval: usize) -> Result<Mesh> {
    let m = points_per_interval;
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "points_per_interval must be at least 2, got {m}"
        )));
    }
    let n = schedule.len();
    let mut nodes = Vec::with_capacity((n + 1) * m + 1);
    let mut impulse_nodes = Vec::with_capacity(n);
    for i in 0..=n {
        let a = schedule.boundary(i);
        let b = schedule.boundary(i + 1);
        if i > 0 {
            impulse_nodes.push(nodes.len());
        }
        nodes.push(a);
        for k in 1..m {
            nodes.push(a + (b - a) * (k as f64) / (m as f64));
        }
    }
    nodes.push(schedule.horizon());
    Mesh::from_nodes(nodes, impulse_nodes, m)
}

impl Mesh {
    /// Mesh from explicit nodes. `impulse_nodes[i − 1]` is the node index of `τ_i`.
    pub fn from_nodes(
        nodes: Vec<f64>,
        impulse_nodes: Vec<usize>,
        points_per_interval: usize,
    ) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument(
                "a mesh needs at least two nodes".into(),
            ));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "first node must be 0, got {}",
                nodes[0]
            )));
        }
        if let Some(k) = nodes
            .windows(2)
            .position(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::InvalidArgument(format!(
                "mesh nodes must be strictly increasing (nodes {k} and {})",
                k + 1
            )));
        }
        let last = nodes.len() - 1;
        if impulse_nodes.windows(2).any(|w| w[1] <= w[0])
            || impulse_nodes.iter().any(|&k| k == 0 || k >= last)
        {
            return Err(Error::InvalidArgument(
                "impulse nodes must be increasing interior node indices".into(),
            ));
        }
        let horizon = nodes[last];
        let n = impulse_nodes.len();
        let count = nodes.len() + n;
        let mut point_times = Vec::with_capacity(count);
        let mut point_interval = Vec::with_capacity(count);
        let mut point_node = Vec::with_capacity(count);
        let mut left_points = Vec::with_capacity(n + 1);
        let mut right_points = vec![0];
        let mut interval = 0;
        for (k, &t) in nodes.iter().enumerate() {
            if impulse_nodes.get(interval).is_some_and(|&node| node == k) {
                left_points.push(point_times.len());
                point_times.push(t);
                point_interval.push(interval);
                point_node.push(k);
                interval += 1;
                right_points.push(point_times.len());
            }
            point_times.push(t);
            point_interval.push(interval);
            point_node.push(k);
        }
        left_points.push(count - 1);

        let segments: Vec<f64> = point_times.windows(2).map(|w| w[1] - w[0]).collect();
        let mut weights = vec![0.0; count];
        let mut diagonal = vec![0.0; count];
        for (k, &h) in segments.iter().enumerate() {
            weights[k] += 0.5 * h;
            weights[k + 1] += 0.5 * h;
            diagonal[k + 1] = 0.5 * h;
        }
        Ok(Self {
            nodes,
            impulse_nodes,
            points_per_interval,
            horizon,
            point_times,
            point_interval,
            point_node,
            left_points,
            right_points,
            segments,
            weights,
            diagonal,
        })
    }

    /// Same mesh with only the node of `τ_j` (1-based) moved by `h`.
    ///
    /// `|h|` must stay below half the distance to the neighbouring nodes.
    pub fn with_shifted_impulse(&self, j: usize, h: f64) -> Result<Self> {
        if j == 0 || j > self.impulse_nodes.len() {
            return Err(Error::InvalidArgument(format!(
                "impulse index {j} out of range"
            )));
        }
        let k = self.impulse_nodes[j - 1];
        let margin =
            0.5 * (self.nodes[k] - self.nodes[k - 1]).min(self.nodes[k + 1] - self.nodes[k]);
        if h.abs() >= margin {
            return Err(Error::StepTooLarge { h, margin });
        }
        let mut nodes = self.nodes.clone();
        nodes[k] += h;
        Self::from_nodes(nodes, self.impulse_nodes.clone(), self.points_per_interval)
    }

    /// Errors unless the impulse nodes coincide exactly with the schedule.
    pub fn check_schedule(&self, schedule: &ImpulseSchedule) -> Result<()> {
        if schedule.len() != self.impulse_nodes.len() {
            return Err(Error::Dimension(format!(
                "mesh carries {} impulse nodes, schedule has {}",
                self.impulse_nodes.len(),
                schedule.len()
            )));
        }
        if schedule.horizon() != self.horizon {
            return Err(Error::InvalidArgument(
                "mesh horizon differs from schedule horizon".into(),
            ));
        }
        for (i, (&k, &tau)) in self.impulse_nodes.iter().zip(schedule.times()).enumerate() {
            if self.nodes[k] != tau {
                return Err(Error::InvalidArgument(format!(
                    "mesh node for tau_{} is {}, schedule has {tau}",
                    i + 1,
                    self.nodes[k]
                )));
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Node index of `τ_i`, `i` 1-based.
    pub fn impulse_node(&self, i: usize) -> usize {
        self.impulse_nodes[i - 1]
    }

    pub fn impulse_nodes(&self) -> &[usize] {
        &self.impulse_nodes
    }

    pub fn points_per_interval(&self) -> usize {
        self.points_per_interval
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn impulse_count(&self) -> usize {
        self.impulse_nodes.len()
    }

    /// Number of grid points, `nodes + N`.
    pub fn point_count(&self) -> usize {
        self.point_times.len()
    }

    pub fn time(&self, p: usize) -> f64 {
        self.point_times[p]
    }

    pub fn times(&self) -> &[f64] {
        &self.point_times
    }

    /// Interval index `i` such that grid point `p` lies in `[τ_i, τ_{i+1}]`.
    pub fn interval(&self, p: usize) -> usize {
        self.point_interval[p]
    }

    pub fn node_of_point(&self, p: usize) -> usize {
        self.point_node[p]
    }

    /// Grid point of `τ_i^-` for `i ∈ 1..=N+1`; `i = N + 1` is `T^-`, the last point.
    pub fn left_point(&self, i: usize) -> usize {
        self.left_points[i - 1]
    }

    /// Grid point of `τ_i^+` for `i ∈ 0..=N`; `i = 0` is the first point.
    pub fn right_point(&self, i: usize) -> usize {
        self.right_points[i]
    }

    /// Grid point of node `k` on the requested side (the sides differ only at impulses).
    pub fn point_of_node(&self, k: usize, side: Side) -> usize {
        let before = self.impulse_nodes.partition_point(|&node| node < k);
        let at_impulse = self
            .impulse_nodes
            .get(before)
            .is_some_and(|&node| node == k);
        match (at_impulse, side) {
            (true, Side::Right) => k + before + 1,
            _ => k + before,
        }
    }

    /// Length of the segment `[t_p, t_{p+1}]`; zero across an impulse.
    pub fn segment(&self, p: usize) -> f64 {
        self.segments[p]
    }

    /// Composite trapezoid weight of point `p` over `[0, T]`.
    pub fn weight(&self, p: usize) -> f64 {
        self.weights[p]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight of the endpoint `p` in the trapezoid over `[0, t_p]`.
    pub fn diagonal_weight(&self, p: usize) -> f64 {
        self.diagonal[p]
    }

    /// Weight of point `q` in the trapezoid over `[0, t_p]`, `q ≤ p`.
    pub fn quadrature_weight(&self, p: usize, q: usize) -> f64 {
        if q == p {
            self.diagonal[p]
        } else {
            self.weights[q]
        }
    }

    /// Weight of point `r` in the trapezoid over `[t_q, T]`, `r ≥ q`.
    pub fn tail_weight(&self, q: usize, r: usize) -> f64 {
        if r == q {
            if q + 1 < self.point_count() {
                0.5 * self.segments[q]
            } else {
                0.0
            }
        } else {
            self.weights[r]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedule(times: &[f64]) -> ImpulseSchedule {
        ImpulseSchedule::new(times.to_vec(), 1.0, 0.01).unwrap()
    }

    #[test]
    fn uniform_mesh_without_impulses() {
        let mesh = build_mesh(&schedule(&[]), 4).unwrap();
        assert_eq!(mesh.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(mesh.point_count(), 5);
        assert_eq!(mesh.left_point(1), 4);
    }

    #[test]
    fn single_impulse_is_a_node() {
        let mesh = build_mesh(&schedule(&[0.5]), 2).unwrap();
        assert_eq!(mesh.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(mesh.impulse_node(1), 2);
        assert_eq!(mesh.point_count(), 6);
        assert_eq!(mesh.left_point(1), 2);
        assert_eq!(mesh.right_point(1), 3);
        assert_eq!(mesh.interval(2), 0);
        assert_eq!(mesh.interval(3), 1);
        assert_eq!(mesh.segment(2), 0.0);
    }

    #[test]
    fn two_impulses() {
        let mesh = build_mesh(&schedule(&[0.3, 0.7]), 2).unwrap();
        assert_eq!(mesh.nodes().len(), 7);
        assert_eq!(mesh.nodes()[mesh.impulse_node(1)], 0.3);
        assert_eq!(mesh.nodes()[mesh.impulse_node(2)], 0.7);
        assert_eq!(mesh.point_of_node(4, Side::Left), 5);
        assert_eq!(mesh.point_of_node(4, Side::Right), 6);
        assert_eq!(mesh.point_of_node(5, Side::Left), 7);
    }

    #[test]
    fn rejects_too_few_points() {
        assert!(build_mesh(&schedule(&[0.5]), 1).is_err());
    }

    #[test]
    fn weights_integrate_constants_exactly() {
        let mesh = build_mesh(&schedule(&[0.3, 0.7]), 5).unwrap();
        let total: f64 = mesh.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
        for p in 0..mesh.point_count() {
            let partial: f64 = (0..=p).map(|q| mesh.quadrature_weight(p, q)).sum();
            assert!((partial - mesh.time(p)).abs() < 1e-15);
            let tail: f64 = (p..mesh.point_count())
                .map(|r| mesh.tail_weight(p, r))
                .sum();
            assert!((tail - (1.0 - mesh.time(p))).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_and_shiftable() {
        let s = schedule(&[0.3, 0.7]);
        assert_eq!(build_mesh(&s, 7).unwrap(), build_mesh(&s, 7).unwrap());
        let mesh = build_mesh(&s, 10).unwrap();
        let moved = mesh.with_shifted_impulse(2, 1e-5).unwrap();
        assert_eq!(moved.nodes()[moved.impulse_node(2)], 0.7 + 1e-5);
        assert!(mesh.with_shifted_impulse(1, 0.1).is_err());
    }
}
