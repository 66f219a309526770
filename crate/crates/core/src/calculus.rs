//! Stochastic and deterministic integrals in the plane.
//!
//! Points of the rectangle carry the partial order `(s,a) <= (t,x)` iff both
//! coordinates are. Two points are *incomparable* in the orientation used
//! here when
//!
//! ```text
//! I((s,a), (s',a')) = 1   iff   s <= s'  and  a >= a'
//! ```
//!
//! Everything below is a rectangle-rule sum anchored at cell lower-left
//! corners, the adapted choice matching the forward Euler scheme:
//!
//! - first-type integral:   `int phi dB      ~ sum phi(corner) dB(cell)`
//! - second-type integral:  `int int psi dB dB' ~ sum over ordered cell pairs
//!   (c, c'), c != c', with corner(c) incomparable-to corner(c')`
//! - Lebesgue integral:     `int f dz        ~ sum f(corner) dt dx`
//!
//! The same-cell pair is excluded from the second-type sum: its expectation
//! `psi * dt * dx` per cell does not vanish under refinement (it converges to
//! a quadratic-variation correction, not to the integral), and keeping it
//! would bias the weak-martingale property the integral is defined to have.
//!
//! The star product couples a field to the region above-left of a point:
//!
//! ```text
//! (h * k)(t,x) = int_0^x int_t^H { h(t,x) k(s,a) + h(s,a) k(t,x) } ds da
//! ```
//!
//! with horizon `H`; it is symmetric and bilinear, and for constants
//! `h = k = c` equals `2 c^2 x (H - t)` exactly. It enters the second-moment
//! identity
//!
//! ```text
//! E[Y(z)^2] = Y(0)^2 + E int_{R_z} { 2 Y alpha + beta^2 } dzeta
//!                    + E int_{R_z} (alpha * alpha)(zeta) dzeta
//! ```
//!
//! where the star horizon is the t-coordinate of `z` itself.

use crate::error::Error;
use crate::grid::{Field2D, GridSpec, Placement, SheetPath};
use crate::{Point, Result};

/// Indicator of the incomparability orientation: `s <= s'` and `a >= a'`.
pub fn incomparable(zeta: Point, zeta_prime: Point) -> bool {
    zeta.0 <= zeta_prime.0 && zeta.1 >= zeta_prime.1
}

/// Componentwise maximum, the least point above both arguments.
pub fn join(zeta: Point, zeta_prime: Point) -> Point {
    (zeta.0.max(zeta_prime.0), zeta.1.max(zeta_prime.1))
}

/// A grid-aligned closed rectangle `[t_{i0}, t_{i1}] x [x_{j0}, x_{j1}]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    grid: GridSpec,
    i0: usize,
    j0: usize,
    i1: usize,
    j1: usize,
}

impl Rect {
    pub fn from_nodes(grid: GridSpec, lower: (usize, usize), upper: (usize, usize)) -> Result<Self> {
        let (i0, j0) = lower;
        let (i1, j1) = upper;
        if i0 > i1 || j0 > j1 || i1 > grid.n_t() || j1 > grid.n_x() {
            return Err(Error::MisalignedRect);
        }
        Ok(Self { grid, i0, j0, i1, j1 })
    }

    /// Corners must sit on grid nodes.
    pub fn from_coords(grid: GridSpec, lower: Point, upper: Point) -> Result<Self> {
        let (i0, j0) = grid.node_index(lower.0, lower.1).map_err(|_| Error::MisalignedRect)?;
        let (i1, j1) = grid.node_index(upper.0, upper.1).map_err(|_| Error::MisalignedRect)?;
        Self::from_nodes(grid, (i0, j0), (i1, j1))
    }

    /// `[0, t] x [0, x]`, the history rectangle of a point.
    pub fn origin_to(grid: GridSpec, upper: Point) -> Result<Self> {
        Self::from_coords(grid, (0.0, 0.0), upper)
    }

    pub fn full(grid: GridSpec) -> Self {
        Self { grid, i0: 0, j0: 0, i1: grid.n_t(), j1: grid.n_x() }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn lower(&self) -> (usize, usize) {
        (self.i0, self.j0)
    }

    pub fn upper(&self) -> (usize, usize) {
        (self.i1, self.j1)
    }

    pub fn area(&self) -> f64 {
        (self.grid.t_node(self.i1) - self.grid.t_node(self.i0))
            * (self.grid.x_node(self.j1) - self.grid.x_node(self.j0))
    }
}

fn check_same_grid(f: &Field2D, grid: GridSpec) -> Result<()> {
    if f.grid() != grid {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Rectangle-rule integral of a field over `rect`, cells weighted by their
/// lower-left value.
pub fn lebesgue_integral(f: &Field2D, rect: Rect) -> Result<f64> {
    check_same_grid(f, rect.grid)?;
    let area = rect.grid.cell_area();
    let mut sum = 0.0;
    for i in rect.i0..rect.i1 {
        for j in rect.j0..rect.j1 {
            // Node and cell placements index the lower-left corner identically.
            sum += f.at(i, j);
        }
    }
    Ok(sum * area)
}

/// First-type integral `int phi dB` over `rect`: adapted sum of
/// `phi(lower-left corner) * dB(cell)`.
pub fn ito_first(phi: &Field2D, sheet: &SheetPath, rect: Rect) -> Result<f64> {
    check_same_grid(phi, rect.grid)?;
    if sheet.grid() != rect.grid {
        return Err(Error::GridMismatch);
    }
    let mut sum = 0.0;
    for i in rect.i0..rect.i1 {
        for j in rect.j0..rect.j1 {
            sum += phi.at(i, j) * sheet.increment(i, j);
        }
    }
    Ok(sum)
}

/// A kernel on ordered pairs of cells, supported where the first cell's
/// corner is incomparable-to the second's (`i <= i'` and `j >= j'`).
///
/// Storage is dense over cell pairs, `(n_t * n_x)^2` values; intended for
/// desk-scale grids.
#[derive(Clone, Debug)]
pub struct Kernel2x2 {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Kernel2x2 {
    fn n_cells(grid: GridSpec) -> usize {
        grid.n_t() * grid.n_x()
    }

    #[inline]
    fn idx(&self, c: (usize, usize), c_prime: (usize, usize)) -> usize {
        let n = Self::n_cells(self.grid);
        let a = c.0 * self.grid.n_x() + c.1;
        let b = c_prime.0 * self.grid.n_x() + c_prime.1;
        a * n + b
    }

    /// Builds from a closure of the two lower-left corners, forcing zero off
    /// the incomparability support.
    pub fn on_support(grid: GridSpec, psi: impl Fn(Point, Point) -> f64) -> Self {
        let n = Self::n_cells(grid);
        let mut values = vec![0.0; n * n];
        for i in 0..grid.n_t() {
            for j in 0..grid.n_x() {
                for ip in i..grid.n_t() {
                    for jp in 0..=j {
                        let a = (i * grid.n_x() + j) * n + (ip * grid.n_x() + jp);
                        values[a] = psi(grid.node(i, j), grid.node(ip, jp));
                    }
                }
            }
        }
        Self { grid, values }
    }

    /// Wraps explicit pair values, rejecting any nonzero entry off support.
    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        let n = Self::n_cells(grid);
        if values.len() != n * n {
            return Err(Error::InvalidGrid(format!(
                "kernel buffer has {} entries, need {}",
                values.len(),
                n * n
            )));
        }
        let k = Self { grid, values };
        for i in 0..grid.n_t() {
            for j in 0..grid.n_x() {
                for ip in 0..grid.n_t() {
                    for jp in 0..grid.n_x() {
                        let on_support = i <= ip && j >= jp;
                        if !on_support && k.at((i, j), (ip, jp)) != 0.0 {
                            return Err(Error::KernelSupport(i, j, ip, jp));
                        }
                    }
                }
            }
        }
        Ok(k)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    #[inline]
    pub fn at(&self, c: (usize, usize), c_prime: (usize, usize)) -> f64 {
        self.values[self.idx(c, c_prime)]
    }
}

/// Second-type integral `int int psi dB dB'` over the full rectangle: sum of
/// `psi(c, c') dB(c) dB(c')` over ordered pairs of distinct cells with
/// `i <= i'` and `j >= j'`.
pub fn ito_second(psi: &Kernel2x2, sheet: &SheetPath) -> Result<f64> {
    if sheet.grid() != psi.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = psi.grid();
    let (n_t, n_x) = (grid.n_t(), grid.n_x());
    let mut sum = 0.0;
    for i in 0..n_t {
        for j in 0..n_x {
            let db = sheet.increment(i, j);
            for ip in i..n_t {
                // ip == i caps jp below j to skip the same-cell pair.
                let jp_end = if ip == i { j } else { j + 1 };
                for jp in 0..jp_end {
                    sum += psi.at((i, j), (ip, jp)) * db * sheet.increment(ip, jp);
                }
            }
        }
    }
    Ok(sum)
}

/// Lower-left prefix sums of a node-placed field:
/// `P[a][b] = sum_{i<a, j<b} f(i, j) * dt * dx`, indexed `a * (n_x+1) + b`.
fn ll_prefix(f: &Field2D) -> Vec<f64> {
    debug_assert_eq!(f.placement(), Placement::Node);
    let grid = f.grid();
    let (rows, cols) = (grid.n_t() + 1, grid.n_x() + 1);
    let area = grid.cell_area();
    let mut p = vec![0.0; rows * cols];
    for a in 1..rows {
        for b in 1..cols {
            p[a * cols + b] = p[(a - 1) * cols + b] + p[a * cols + (b - 1)]
                - p[(a - 1) * cols + (b - 1)]
                + f.at(a - 1, b - 1) * area;
        }
    }
    p
}

/// Lower-left prefix sums, exposed for solvers that need region integrals of
/// a node field at every node at once.
pub(crate) fn ll_prefix_table(f: &Field2D) -> Vec<f64> {
    ll_prefix(f)
}

/// Star product of two node-placed fields with the given horizon (a t-node):
///
/// `(h * k)(t,x) = h(t,x) * Q_k(t,x) + k(t,x) * Q_h(t,x)` where
/// `Q_f(t,x) = int_0^x int_t^H f`, all by the lower-left rectangle rule.
/// Zero where `t > H`.
pub fn star(h: &Field2D, k: &Field2D, horizon_t: f64) -> Result<Field2D> {
    if h.grid() != k.grid() || h.placement() != Placement::Node || k.placement() != Placement::Node {
        return Err(Error::GridMismatch);
    }
    let grid = h.grid();
    let (ih, _) = grid.node_index(horizon_t, 0.0)?;
    let cols = grid.n_x() + 1;
    let ph = ll_prefix(h);
    let pk = ll_prefix(k);

    let mut out = Field2D::zeros(grid, Placement::Node);
    for i in 0..=grid.n_t() {
        if i > ih {
            break;
        }
        for j in 0..=grid.n_x() {
            let qk = pk[ih * cols + j] - pk[i * cols + j];
            let qh = ph[ih * cols + j] - ph[i * cols + j];
            out.set(i, j, h.at(i, j) * qk + k.at(i, j) * qh);
        }
    }
    Ok(out)
}

/// Per-path and averaged right-hand side of the second-moment identity at
/// node `z`; the star horizon is `z`'s own t-coordinate.
#[derive(Clone, Debug)]
pub struct SecondMomentRhs {
    pub value: f64,
    pub per_path: Vec<f64>,
}

/// `Y(0)^2 + mean_k [ int_{R_z} (2 Y_k alpha_k + beta_k^2) + int_{R_z} (alpha_k * alpha_k) ]`
/// over path ensembles of node-placed state and realized coefficient fields.
pub fn second_moment_rhs(
    ys: &[Field2D],
    alphas: &[Field2D],
    betas: &[Field2D],
    z: Point,
) -> Result<SecondMomentRhs> {
    if ys.is_empty() || ys.len() != alphas.len() || ys.len() != betas.len() {
        return Err(Error::Domain(
            "state and coefficient ensembles must be equal-length and nonempty".into(),
        ));
    }
    let grid = ys[0].grid();
    let rect = Rect::origin_to(grid, z)?;
    let horizon = grid.t_node(rect.i1);

    let mut per_path = Vec::with_capacity(ys.len());
    for ((y, a), b) in ys.iter().zip(alphas).zip(betas) {
        check_same_grid(y, grid)?;
        let drift = y.zip_with(a, |yv, av| 2.0 * yv * av)?;
        let noise = b.map(|bv| bv * bv);
        let integrand = drift.zip_with(&noise, |d, n| d + n)?;
        let star_aa = star(a, a, horizon)?;
        let val = y.at(0, 0).powi(2)
            + lebesgue_integral(&integrand, rect)?
            + lebesgue_integral(&star_aa, rect)?;
        per_path.push(val);
    }
    let value = per_path.iter().sum::<f64>() / per_path.len() as f64;
    Ok(SecondMomentRhs { value, per_path })
}
