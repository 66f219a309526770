//! Tensor grids on `[0,T] x [0,X]`, scalar fields on them, and seeded
//! Brownian-sheet sampling.
//!
//! A grid has `n_t x n_x` cells and `(n_t+1) x (n_x+1)` nodes. Cell `(i, j)`
//! is `[t_i, t_{i+1}] x [x_j, x_{j+1}]`; its lower-left corner is node
//! `(i, j)`. The sheet is sampled by drawing independent cell increments
//! `dB ~ N(0, dt * dx)` and accumulating them, so node values vanish on both
//! axes and the rectangle-increment identity holds by construction.
//!
//! Reproducibility: each path gets its own ChaCha substream keyed by
//! `(master_seed, path_index)`, so path `k` is the same whether paths are
//! drawn serially or in parallel, in any order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Error;
use crate::{Point, Result};

/// Relative slack for matching a coordinate to a grid node.
const NODE_SNAP_TOL: f64 = 1e-9;

/// A uniform tensor grid on `[0, t_horizon] x [0, x_horizon]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    t_horizon: f64,
    x_horizon: f64,
    n_t: usize,
    n_x: usize,
}

impl GridSpec {
    pub fn new(t_horizon: f64, x_horizon: f64, n_t: usize, n_x: usize) -> Result<Self> {
        if !(t_horizon > 0.0) || !(x_horizon > 0.0) || !t_horizon.is_finite() || !x_horizon.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "horizons must be positive finite, got ({t_horizon}, {x_horizon})"
            )));
        }
        if n_t == 0 || n_x == 0 {
            return Err(Error::InvalidGrid("cell counts must be positive".into()));
        }
        Ok(Self { t_horizon, x_horizon, n_t, n_x })
    }

    pub fn t_horizon(&self) -> f64 {
        self.t_horizon
    }

    pub fn x_horizon(&self) -> f64 {
        self.x_horizon
    }

    /// Number of cells in the t direction.
    pub fn n_t(&self) -> usize {
        self.n_t
    }

    /// Number of cells in the x direction.
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn dt(&self) -> f64 {
        self.t_horizon / self.n_t as f64
    }

    pub fn dx(&self) -> f64 {
        self.x_horizon / self.n_x as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dt() * self.dx()
    }

    pub fn t_node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.n_t);
        // Exact horizon at the last node regardless of rounding in dt.
        if i == self.n_t {
            self.t_horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn x_node(&self, j: usize) -> f64 {
        debug_assert!(j <= self.n_x);
        if j == self.n_x {
            self.x_horizon
        } else {
            j as f64 * self.dx()
        }
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        (self.t_node(i), self.x_node(j))
    }

    /// Maps a point to the node indices it sits on.
    pub fn node_index(&self, t: f64, x: f64) -> Result<(usize, usize)> {
        let snap = |v: f64, dv: f64, n: usize| -> Option<usize> {
            let raw = v / dv;
            let idx = raw.round();
            if idx < 0.0 || idx > n as f64 {
                return None;
            }
            let scale = (n as f64 * dv).abs().max(1.0);
            if (v - idx * dv).abs() <= NODE_SNAP_TOL * scale {
                Some(idx as usize)
            } else {
                None
            }
        };
        match (snap(t, self.dt(), self.n_t), snap(x, self.dx(), self.n_x)) {
            (Some(i), Some(j)) => Ok((i, j)),
            _ => Err(Error::NodeNotOnGrid { t, x }),
        }
    }
}

/// Where a field's values live.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    /// One value per node: `(n_t + 1) x (n_x + 1)`.
    Node,
    /// One value per cell: `n_t x n_x`.
    Cell,
}

/// A scalar field on a grid, row-major in the t index.
#[derive(Clone, Debug, PartialEq)]
pub struct Field2D {
    grid: GridSpec,
    placement: Placement,
    values: Vec<f64>,
}

impl Field2D {
    /// Node-placed field from a closure of the node coordinates.
    pub fn nodes(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let (rows, cols) = (grid.n_t + 1, grid.n_x + 1);
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(grid.t_node(i), grid.x_node(j)));
            }
        }
        Self { grid, placement: Placement::Node, values }
    }

    /// Cell-placed field from a closure of the cell's lower-left corner.
    pub fn cells(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let (rows, cols) = (grid.n_t, grid.n_x);
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(grid.t_node(i), grid.x_node(j)));
            }
        }
        Self { grid, placement: Placement::Cell, values }
    }

    pub fn constant(grid: GridSpec, placement: Placement, c: f64) -> Self {
        match placement {
            Placement::Node => Self::nodes(grid, |_, _| c),
            Placement::Cell => Self::cells(grid, |_, _| c),
        }
    }

    /// Wraps a row-major value buffer; the length must match the placement.
    pub fn from_values(grid: GridSpec, placement: Placement, values: Vec<f64>) -> Result<Self> {
        let want = match placement {
            Placement::Node => (grid.n_t + 1) * (grid.n_x + 1),
            Placement::Cell => grid.n_t * grid.n_x,
        };
        if values.len() != want {
            return Err(Error::InvalidGrid(format!(
                "value buffer has {} entries, placement needs {}",
                values.len(),
                want
            )));
        }
        Ok(Self { grid, placement, values })
    }

    pub fn zeros(grid: GridSpec, placement: Placement) -> Self {
        Self::constant(grid, placement, 0.0)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    pub fn rows(&self) -> usize {
        match self.placement {
            Placement::Node => self.grid.n_t + 1,
            Placement::Cell => self.grid.n_t,
        }
    }

    pub fn cols(&self) -> usize {
        match self.placement {
            Placement::Node => self.grid.n_x + 1,
            Placement::Cell => self.grid.n_x,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows() && j < self.cols());
        self.values[i * self.cols() + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows() && j < self.cols());
        let cols = self.cols();
        self.values[i * cols + j] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Coordinates a value is anchored at (node, or a cell's lower-left corner).
    pub fn anchor(&self, i: usize, j: usize) -> Point {
        self.grid.node(i, j)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            placement: self.placement,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination; the fields must share grid and placement.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid || self.placement != other.placement {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: self.grid,
            placement: self.placement,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.zip_with(other, |a, b| a - b)?.sup_norm())
    }
}

/// Master seed for a family of independent sheet paths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedSpec {
    pub master_seed: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Generator for one path: ChaCha stream `path_index` under the master key.
    pub fn rng(&self, path_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(path_index);
        rng
    }
}

/// One sampled Brownian-sheet path: cell increments and accumulated node values.
#[derive(Clone, Debug)]
pub struct SheetPath {
    /// `dB ~ N(0, dt * dx)`, cell-placed.
    increments: Field2D,
    /// `B` at nodes; zero on both axes.
    nodes: Field2D,
}

impl SheetPath {
    pub fn grid(&self) -> GridSpec {
        self.nodes.grid()
    }

    /// Cell increment `dB(i, j)`.
    #[inline]
    pub fn increment(&self, i: usize, j: usize) -> f64 {
        self.increments.at(i, j)
    }

    /// Sheet value `B(t_i, x_j)`.
    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.nodes.at(i, j)
    }

    pub fn increments(&self) -> &Field2D {
        &self.increments
    }

    pub fn node_values(&self) -> &Field2D {
        &self.nodes
    }

    /// `B(t1,x1) - B(t0,x1) - B(t1,x0) + B(t0,x0)` for node corners
    /// `(i0,j0) <= (i1,j1)`.
    pub fn rectangle_increment(&self, i0: usize, j0: usize, i1: usize, j1: usize) -> f64 {
        debug_assert!(i0 <= i1 && j0 <= j1);
        self.value(i1, j1) - self.value(i0, j1) - self.value(i1, j0) + self.value(i0, j0)
    }
}

/// Draws path `path_index` of the Brownian sheet on `grid`.
pub fn sample_sheet(grid: GridSpec, seed: SeedSpec, path_index: u64) -> SheetPath {
    let mut rng = seed.rng(path_index);
    let sd = grid.cell_area().sqrt();
    let (n_t, n_x) = (grid.n_t, grid.n_x);

    let mut inc = Vec::with_capacity(n_t * n_x);
    for _ in 0..n_t * n_x {
        let z: f64 = StandardNormal.sample(&mut rng);
        inc.push(sd * z);
    }
    let increments = Field2D {
        grid,
        placement: Placement::Cell,
        values: inc,
    };

    // B(t_i, x_j) = sum of increments over cells below-left; 2D prefix sum.
    let mut nodes = Field2D::zeros(grid, Placement::Node);
    for i in 0..n_t {
        for j in 0..n_x {
            let v = nodes.at(i + 1, j) + nodes.at(i, j + 1) - nodes.at(i, j)
                + increments.at(i, j);
            nodes.set(i + 1, j + 1, v);
        }
    }

    SheetPath { increments, nodes }
}

/// Sample covariance with delta-method standard error.
#[derive(Clone, Copy, Debug)]
pub struct CovEstimate {
    pub covariance: f64,
    pub std_error: f64,
}

/// Estimates `Cov(B(p1), B(p2))` across paths; points must be grid nodes.
pub fn empirical_covariance(paths: &[SheetPath], p1: Point, p2: Point) -> Result<CovEstimate> {
    if paths.len() < 2 {
        return Err(Error::Domain("need at least two paths".into()));
    }
    let grid = paths[0].grid();
    let (i1, j1) = grid.node_index(p1.0, p1.1)?;
    let (i2, j2) = grid.node_index(p2.0, p2.1)?;

    let n = paths.len() as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for p in paths {
        m1 += p.value(i1, j1);
        m2 += p.value(i2, j2);
    }
    m1 /= n;
    m2 /= n;

    // Products u_k = (B1 - mean1)(B2 - mean2): covariance is their mean and
    // the standard error is their spread over sqrt(n).
    let (mut sum_u, mut sum_u2) = (0.0, 0.0);
    for p in paths {
        let u = (p.value(i1, j1) - m1) * (p.value(i2, j2) - m2);
        sum_u += u;
        sum_u2 += u * u;
    }
    let cov = sum_u / (n - 1.0);
    let mean_u = sum_u / n;
    let var_u = (sum_u2 - n * mean_u * mean_u) / (n - 1.0);
    Ok(CovEstimate {
        covariance: cov,
        std_error: (var_u / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid4() -> GridSpec {
        GridSpec::new(1.0, 1.0, 4, 4).unwrap()
    }

    #[test]
    fn grid_rejects_bad_arguments() {
        assert!(GridSpec::new(0.0, 1.0, 4, 4).is_err());
        assert!(GridSpec::new(1.0, -1.0, 4, 4).is_err());
        assert!(GridSpec::new(1.0, 1.0, 0, 4).is_err());
        assert!(GridSpec::new(f64::NAN, 1.0, 4, 4).is_err());
    }

    #[test]
    fn node_index_snaps_and_rejects() {
        let g = GridSpec::new(0.5, 1.0, 5, 8).unwrap();
        assert_eq!(g.node_index(0.3, 0.5).unwrap(), (3, 4));
        assert_eq!(g.node_index(0.5, 1.0).unwrap(), (5, 8));
        assert_eq!(g.node_index(0.0, 0.0).unwrap(), (0, 0));
        assert!(matches!(
            g.node_index(0.33, 0.5),
            Err(Error::NodeNotOnGrid { .. })
        ));
        assert!(g.node_index(0.6, 0.5).is_err());
    }

    #[test]
    fn field_anchors_and_indexing() {
        let g = grid4();
        let f = Field2D::nodes(g, |t, x| t + 10.0 * x);
        assert_eq!(f.rows(), 5);
        assert_eq!(f.cols(), 5);
        assert_relative_eq!(f.at(1, 2), 0.25 + 5.0);
        let c = Field2D::cells(g, |t, x| t + 10.0 * x);
        assert_eq!(c.rows(), 4);
        assert_relative_eq!(c.at(3, 3), 0.75 + 7.5);
    }

    #[test]
    fn sheet_vanishes_on_axes() {
        let g = grid4();
        let path = sample_sheet(g, SeedSpec::new(7), 0);
        for i in 0..=4 {
            assert_eq!(path.value(i, 0), 0.0);
            assert_eq!(path.value(0, i), 0.0);
        }
    }

    #[test]
    fn rectangle_increment_matches_cell_sums() {
        let g = GridSpec::new(2.0, 1.5, 6, 5).unwrap();
        let path = sample_sheet(g, SeedSpec::new(42), 3);
        let (i0, j0, i1, j1) = (1, 2, 5, 4);
        let mut direct = 0.0;
        for i in i0..i1 {
            for j in j0..j1 {
                direct += path.increment(i, j);
            }
        }
        assert_relative_eq!(
            path.rectangle_increment(i0, j0, i1, j1),
            direct,
            epsilon = 1e-12
        );
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let g = grid4();
        let seed = SeedSpec::new(123);
        let a = sample_sheet(g, seed, 5);
        let b = sample_sheet(g, seed, 5);
        let c = sample_sheet(g, seed, 6);
        assert_eq!(a.node_values().values(), b.node_values().values());
        assert_ne!(a.node_values().values(), c.node_values().values());
    }

    #[test]
    fn increment_moments_match_cell_area() {
        // sd of dB must be sqrt(dt * dx); check first two moments over many draws.
        let g = GridSpec::new(1.0, 2.0, 8, 4).unwrap();
        let seed = SeedSpec::new(99);
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut n = 0usize;
        for k in 0..200 {
            let p = sample_sheet(g, seed, k);
            for &v in p.increments().values() {
                sum += v;
                sum2 += v * v;
                n += 1;
            }
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        let want = g.cell_area();
        assert!(mean.abs() < 5.0 * (want / n as f64).sqrt());
        assert_relative_eq!(var, want, max_relative = 0.05);
    }

    #[test]
    fn covariance_matches_min_product_law() {
        // Oracle: Cov(B(s,a), B(t,x)) = min(s,t) * min(a,x).
        let g = GridSpec::new(1.0, 1.0, 8, 8).unwrap();
        let seed = SeedSpec::new(2024);
        let paths: Vec<_> = (0..4000).map(|k| sample_sheet(g, seed, k)).collect();
        let pairs = [
            ((1.0, 1.0), (1.0, 1.0)),
            ((0.5, 1.0), (1.0, 1.0)),
            ((0.5, 0.5), (0.25, 1.0)),
            ((0.25, 0.25), (0.75, 0.5)),
        ];
        for (p1, p2) in pairs {
            let est = empirical_covariance(&paths, p1, p2).unwrap();
            let oracle = p1.0.min(p2.0) * p1.1.min(p2.1);
            assert!(
                (est.covariance - oracle).abs() <= 5.0 * est.std_error,
                "pair {p1:?},{p2:?}: est {} oracle {} se {}",
                est.covariance,
                oracle,
                est.std_error
            );
        }
    }

    #[test]
    fn covariance_rejects_off_grid_points() {
        let g = grid4();
        let seed = SeedSpec::new(1);
        let paths: Vec<_> = (0..4).map(|k| sample_sheet(g, seed, k)).collect();
        assert!(empirical_covariance(&paths, (0.3, 0.5), (1.0, 1.0)).is_err());
    }
}
