//! Adjoint equations and the Hamiltonian for maximum-principle analysis.
//!
//! The first adjoint pair `(p, q)` solves a backward equation anchored at the
//! terminal corner: at every node,
//!
//! ```text
//! p(z) = g'(Y(T,X)) + int_{Z \ R_z} dH/dy(zeta) d zeta  -  (noise part)
//! ```
//!
//! where `R_z` is the history rectangle of `z`, `Z = [0,T] x [0,X]`, and the
//! Hamiltonian carries a nonlocal star term from the second-moment expansion:
//!
//! ```text
//! H(z) = f(z,y,u) + p alpha + q beta + (L * alpha)(z),
//! L(z) = -dH/dy(z).
//! ```
//!
//! In the deterministic setting (`q = 0`) with linear state dependence
//! `alpha_y = a0` this closes into a pair of fixed-point equations,
//!
//! ```text
//! L = -(a0 p + b0 q) - a0 (L * 1),      p = theta - Backward[L],
//! ```
//!
//! solved here by Picard iteration; `Backward[d](z)` integrates `d` over the
//! complement of `R_z` with each cell read at its upper-right corner, the
//! mirror image of the forward scheme's lower-left rule. The iteration
//! contracts when `2 |a0| T X < 1`; the solvers report their final residual
//! and fail loudly otherwise.
//!
//! A dense linear-algebra oracle (assembling the same equations as one
//! `2N x 2N` system) backs the iterative solvers in tests and in the
//! acceptance checks. The positivity continuation criterion for the
//! two-kernel comparison equation lives here too: both kernel bounds must
//! satisfy `K |z0| < sqrt(r0)` with `r0` the first zero of the oscillatory
//! series from [`crate::series`].

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::calculus::star;
use crate::error::Error;
use crate::forward::{CoefFn, ControlProblem, TerminalFn};
use crate::grid::{Field2D, GridSpec, Placement, SeedSpec};
use crate::series::find_r0;
use crate::{Point, Result};

/// Partial derivatives of a problem's coefficient callbacks, all in the
/// `(z, y, u) -> value` shape of the coefficients themselves.
#[derive(Clone)]
pub struct ProblemDerivatives {
    pub alpha_y: CoefFn,
    pub alpha_u: CoefFn,
    pub beta_y: CoefFn,
    pub beta_u: CoefFn,
    pub cost_y: CoefFn,
    pub cost_u: CoefFn,
    pub terminal_y: TerminalFn,
}

/// Checks every derivative callback against a central finite difference of
/// its coefficient at `n_probes` random interior points, and returns the
/// largest absolute discrepancy found.
///
/// Probes draw `y` from `[0.5, 2.5]` and `u` from `[0.5, 2.0]`, ranges on
/// which all shipped problems are smooth.
pub fn verify_derivatives(
    problem: &ControlProblem,
    derivs: &ProblemDerivatives,
    n_probes: usize,
    seed: SeedSpec,
    step: f64,
) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::Domain("finite-difference step must be positive".into()));
    }
    let mut rng = seed.rng(0);
    let mut worst: f64 = 0.0;
    for _ in 0..n_probes {
        let z: Point = (
            rng.random_range(0.0..problem.t_horizon),
            rng.random_range(0.0..problem.x_horizon),
        );
        let y = rng.random_range(0.5..2.5);
        let u = rng.random_range(0.5..2.0);
        let fd = |f: &CoefFn, wrt_y: bool| -> f64 {
            if wrt_y {
                (f(z, y + step, u) - f(z, y - step, u)) / (2.0 * step)
            } else {
                (f(z, y, u + step) - f(z, y, u - step)) / (2.0 * step)
            }
        };
        let pairs = [
            ((derivs.alpha_y)(z, y, u), fd(&problem.alpha, true)),
            ((derivs.alpha_u)(z, y, u), fd(&problem.alpha, false)),
            ((derivs.beta_y)(z, y, u), fd(&problem.beta, true)),
            ((derivs.beta_u)(z, y, u), fd(&problem.beta, false)),
            ((derivs.cost_y)(z, y, u), fd(&problem.running_cost, true)),
            ((derivs.cost_u)(z, y, u), fd(&problem.running_cost, false)),
            (
                (derivs.terminal_y)(y),
                ((problem.terminal_value)(y + step) - (problem.terminal_value)(y - step))
                    / (2.0 * step),
            ),
        ];
        for (exact, approx) in pairs {
            worst = worst.max((exact - approx).abs());
        }
    }
    Ok(worst)
}

/// Integral of a node field over the complement of each node's history
/// rectangle, reading every cell at its upper-right corner:
///
/// ```text
/// B[i][j] = sum over cells (i',j') with i' >= i or j' >= j of
///           d[i'+1][j'+1] dt dx
/// ```
///
/// so `B` vanishes at the terminal corner and collects the whole domain at
/// the origin.
pub fn backward_region_integral(d: &Field2D) -> Result<Field2D> {
    if d.placement() != Placement::Node {
        return Err(Error::GridMismatch);
    }
    let grid = d.grid();
    let (n_t, n_x) = (grid.n_t(), grid.n_x());
    let area = grid.cell_area();
    // Prefix sums of the upper-right corner values: w[a][b] = sum over cells
    // (i'<a, j'<b) of d[i'+1][j'+1] * area.
    let cols = n_x + 1;
    let mut w = vec![0.0; (n_t + 1) * cols];
    for a in 1..=n_t {
        for b in 1..=n_x {
            w[a * cols + b] = w[(a - 1) * cols + b] + w[a * cols + (b - 1)]
                - w[(a - 1) * cols + (b - 1)]
                + d.at(a, b) * area;
        }
    }
    let total = w[n_t * cols + n_x];
    let mut out = Field2D::zeros(grid, Placement::Node);
    for i in 0..=n_t {
        for j in 0..=n_x {
            out.set(i, j, total - w[i.min(n_t) * cols + j.min(n_x)]);
        }
    }
    Ok(out)
}

/// A converged fixed-point field with its iteration diagnostics.
#[derive(Clone, Debug)]
pub struct FixedPointSolution {
    pub field: Field2D,
    pub iterations: usize,
    /// Sup norm of `field - rhs(field)` at exit.
    pub residual: f64,
}

/// Solves `L = base + (L * w)` by Picard iteration from `L = base`.
pub fn solve_l_equation(
    base: &Field2D,
    w: &Field2D,
    horizon_t: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointSolution> {
    let mut l = base.clone();
    let scale = 1.0 + base.sup_norm();
    for it in 1..=max_iter {
        let next = base.zip_with(&star(&l, w, horizon_t)?, |b, s| b + s)?;
        let update = next.sup_diff(&l)?;
        l = next;
        if update <= tol {
            let residual = l
                .sup_diff(&base.zip_with(&star(&l, w, horizon_t)?, |b, s| b + s)?)?;
            return Ok(FixedPointSolution { field: l, iterations: it, residual });
        }
        if !update.is_finite() || update > 1e8 * scale {
            return Err(Error::NoConvergence { residual: update, iterations: it });
        }
    }
    Err(Error::NoConvergence {
        residual: l.sup_diff(&base.zip_with(&star(&l, w, horizon_t)?, |b, s| b + s)?)?,
        iterations: max_iter,
    })
}

/// The linear-state specialization `L = -(a0 p + b0 q) - a0 (L * 1)`.
pub fn solve_l_fixed_point(
    p: &Field2D,
    q: &Field2D,
    alpha0: f64,
    beta0: f64,
    horizon_t: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointSolution> {
    let base = p.zip_with(q, |pv, qv| -(alpha0 * pv + beta0 * qv))?;
    let w = Field2D::constant(p.grid(), Placement::Node, -alpha0);
    solve_l_equation(&base, &w, horizon_t, tol, max_iter)
}

/// Adjoint triple for a deterministic problem, with solver diagnostics.
#[derive(Clone, Debug)]
pub struct AdjointSolution {
    pub p: Field2D,
    pub q: Field2D,
    pub l: Field2D,
    pub iterations: usize,
    /// Joint sup-norm residual of the coupled equations at exit.
    pub residual: f64,
}

/// Solves the coupled deterministic adjoint system for terminal weight
/// `theta` and state-linear drift slope `alpha0`:
///
/// ```text
/// p = theta - Backward[L],    L = -a0 p - a0 (L * 1),    q = 0.
/// ```
pub fn solve_adjoint_deterministic(
    alpha0: f64,
    theta: f64,
    grid: GridSpec,
    tol: f64,
    max_iter: usize,
) -> Result<AdjointSolution> {
    let horizon = grid.t_horizon();
    let q = Field2D::zeros(grid, Placement::Node);
    let mut p = Field2D::constant(grid, Placement::Node, theta);
    let mut l = solve_l_fixed_point(&p, &q, alpha0, 0.0, horizon, tol * 0.1, max_iter)?.field;
    let mut last_update = f64::INFINITY;
    for it in 1..=max_iter {
        let p_next = backward_region_integral(&l)?.map(|b| theta - b);
        let update_p = p.sup_diff(&p_next)?;
        p = p_next;
        let l_sol = solve_l_fixed_point(&p, &q, alpha0, 0.0, horizon, tol * 0.1, max_iter)?;
        let update_l = l.sup_diff(&l_sol.field)?;
        l = l_sol.field;
        last_update = update_p + update_l;
        if last_update <= tol {
            // Report the true joint residual of the coupled equations.
            let r_p = p.sup_diff(&backward_region_integral(&l)?.map(|b| theta - b))?;
            return Ok(AdjointSolution { p, q, l, iterations: it, residual: r_p + l_sol.residual });
        }
    }
    Err(Error::NoConvergence { residual: last_update, iterations: max_iter })
}

/// A problem together with its derivative callbacks: everything needed to
/// evaluate the Hamiltonian and its control derivative.
#[derive(Clone)]
pub struct Hamiltonian {
    pub problem: ControlProblem,
    pub derivs: ProblemDerivatives,
}

impl Hamiltonian {
    /// Hamiltonian value at node `z` for scalar arguments, extending the
    /// drift uniformly (`alpha(zeta', y, u)` over the star region):
    ///
    /// ```text
    /// H = f(z,y,u) + p alpha(z,y,u) + q beta(z,y,u) + (L * alpha(., y, u))(z)
    /// ```
    pub fn value(&self, z: Point, y: f64, u: f64, p: f64, q: f64, l: &Field2D) -> Result<f64> {
        let grid = l.grid();
        let (i, j) = grid.node_index(z.0, z.1)?;
        let alpha_field = Field2D::nodes(grid, |t, x| (self.problem.alpha)((t, x), y, u));
        let s = star(l, &alpha_field, grid.t_horizon())?;
        Ok((self.problem.running_cost)(z, y, u)
            + p * (self.problem.alpha)(z, y, u)
            + q * (self.problem.beta)(z, y, u)
            + s.at(i, j))
    }

    /// Control derivative of the Hamiltonian at every node, with the star
    /// term differentiated through its drift slot:
    ///
    /// ```text
    /// dH/du(z) = f_u + p alpha_u + q beta_u + (L * alpha_u(., Y(.), u(.)))(z)
    /// ```
    ///
    /// All fields are node-placed on one grid. Non-finite values (a cost
    /// derivative at a singular control, say) are reported as errors.
    pub fn dh_du_field(
        &self,
        y: &Field2D,
        u: &Field2D,
        p: &Field2D,
        q: &Field2D,
        l: &Field2D,
    ) -> Result<Field2D> {
        let grid = y.grid();
        let mut alpha_u = Field2D::zeros(grid, Placement::Node);
        for i in 0..=grid.n_t() {
            for j in 0..=grid.n_x() {
                alpha_u.set(i, j, (self.derivs.alpha_u)(grid.node(i, j), y.at(i, j), u.at(i, j)));
            }
        }
        let s = star(l, &alpha_u, grid.t_horizon())?;
        let mut out = Field2D::zeros(grid, Placement::Node);
        for i in 0..=grid.n_t() {
            for j in 0..=grid.n_x() {
                let z = grid.node(i, j);
                let (yv, uv) = (y.at(i, j), u.at(i, j));
                let v = (self.derivs.cost_u)(z, yv, uv)
                    + p.at(i, j) * alpha_u.at(i, j)
                    + q.at(i, j) * (self.derivs.beta_u)(z, yv, uv)
                    + s.at(i, j);
                if !v.is_finite() {
                    return Err(Error::SingularDerivative(v));
                }
                out.set(i, j, v);
            }
        }
        Ok(out)
    }
}

/// First zero of the oscillatory series, cached process-wide.
fn r0_cached() -> f64 {
    static R0: OnceLock<f64> = OnceLock::new();
    *R0.get_or_init(|| find_r0(1e-12).expect("root bracket [1, 2] is fixed and valid"))
}

/// Positivity continuation criterion for a comparison equation whose two
/// kernels are bounded by `k1` and `k2` on the rectangle up to `z0`: both
/// must satisfy `K |z0| < sqrt(r0)`, with `|z0| = t0 * x0` the rectangle
/// area and `r0` the first zero of the oscillatory series.
pub fn positivity_criterion(k1: f64, k2: f64, z0: Point) -> Result<bool> {
    if !(k1 >= 0.0 && k2 >= 0.0) {
        return Err(Error::Domain("kernel bounds must be nonnegative".into()));
    }
    if !(z0.0 > 0.0 && z0.1 > 0.0) {
        return Err(Error::Domain("reference point must have positive coordinates".into()));
    }
    let area = z0.0 * z0.1;
    let bound = r0_cached().sqrt();
    Ok(k1 * area < bound && k2 * area < bound)
}

/// Dense assembly of the discrete adjoint equations, used as an independent
/// oracle for the Picard solvers. Unknowns are stacked node vectors.
pub(crate) mod dense {
    use super::*;

    fn node_count(grid: GridSpec) -> usize {
        (grid.n_t() + 1) * (grid.n_x() + 1)
    }

    /// Matrix of the map `L -> (L * 1)` on node vectors: row `m = (i, j)`
    /// holds `(L * 1)(z_m) = L(z_m) (T - t_i) x_j + sum_{i' in [i, n_t),
    /// j' < j} L[i'][j'] area`.
    fn star_ones_matrix(grid: GridSpec) -> DMatrix<f64> {
        let (n_t, n_x) = (grid.n_t(), grid.n_x());
        let cols = n_x + 1;
        let n = node_count(grid);
        let area = grid.cell_area();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..=n_t {
            for j in 0..=n_x {
                let row = i * cols + j;
                m[(row, row)] += (grid.t_horizon() - grid.t_node(i)) * grid.x_node(j);
                for ip in i..n_t {
                    for jp in 0..j {
                        m[(row, ip * cols + jp)] += area;
                    }
                }
            }
        }
        m
    }

    /// Matrix of `L -> Backward[L]` on node vectors (upper-right corner
    /// reads over the complement of each history rectangle).
    fn backward_matrix(grid: GridSpec) -> DMatrix<f64> {
        let (n_t, n_x) = (grid.n_t(), grid.n_x());
        let cols = n_x + 1;
        let n = node_count(grid);
        let area = grid.cell_area();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..=n_t {
            for j in 0..=n_x {
                let row = i * cols + j;
                for ip in 0..n_t {
                    for jp in 0..n_x {
                        if ip >= i || jp >= j {
                            m[(row, (ip + 1) * cols + (jp + 1))] += area;
                        }
                    }
                }
            }
        }
        m
    }

    /// Solves `(I - c S) L = base` exactly, where `S` is the star-with-ones
    /// map; the oracle for `L = base + c (L * 1)`.
    #[cfg(test)]
    pub(crate) fn l_with_constant_weight(base: &Field2D, c: f64) -> Result<Field2D> {
        let grid = base.grid();
        let n = node_count(grid);
        let a = DMatrix::identity(n, n) - star_ones_matrix(grid) * c;
        let rhs = DVector::from_column_slice(base.values());
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Domain("dense fixed-point system is singular".into()))?;
        Field2D::from_values(grid, Placement::Node, sol.as_slice().to_vec())
    }

    /// Solves the coupled deterministic adjoint system
    /// `p + Backward[L] = theta 1`, `a0 p + L + a0 S L = 0` as one dense
    /// block system, returning `(p, L)`.
    pub(crate) fn adjoint_pair(alpha0: f64, theta: f64, grid: GridSpec) -> Result<(Field2D, Field2D)> {
        let n = node_count(grid);
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
        m.view_mut((0, n), (n, n)).copy_from(&backward_matrix(grid));
        m.view_mut((n, 0), (n, n)).copy_from(&(DMatrix::identity(n, n) * alpha0));
        m.view_mut((n, n), (n, n))
            .copy_from(&(DMatrix::identity(n, n) + star_ones_matrix(grid) * alpha0));
        let mut rhs = DVector::zeros(2 * n);
        for k in 0..n {
            rhs[k] = theta;
        }
        let sol = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Domain("dense adjoint system is singular".into()))?;
        let p = Field2D::from_values(grid, Placement::Node, sol.as_slice()[..n].to_vec())?;
        let l = Field2D::from_values(grid, Placement::Node, sol.as_slice()[n..].to_vec())?;
        Ok((p, l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::ll_prefix_table;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    #[test]
    fn backward_integral_of_ones_is_complement_area() {
        let grid = GridSpec::new(2.0, 1.0, 8, 4).unwrap();
        let d = Field2D::constant(grid, Placement::Node, 1.0);
        let b = backward_region_integral(&d).unwrap();
        for i in 0..=8 {
            for j in 0..=4 {
                let (t, x) = grid.node(i, j);
                assert_relative_eq!(b.at(i, j), 2.0 * 1.0 - t * x, epsilon = 1e-12);
            }
        }
        assert_eq!(b.at(8, 4), 0.0);
    }

    #[test]
    fn l_solver_satisfies_its_equation_and_expansion() {
        let grid = GridSpec::new(1.0, 1.0, 12, 12).unwrap();
        let p = Field2D::nodes(grid, |t, x| 1.0 + t + 0.5 * x);
        let q = Field2D::zeros(grid, Placement::Node);
        let a0 = 0.3;
        let sol = solve_l_fixed_point(&p, &q, a0, 0.0, 1.0, 1e-12, 500).unwrap();
        assert!(sol.residual < 1e-10, "residual {}", sol.residual);

        // The star of L with the constant field matches the explicit
        // region-quadrature expansion of (L * 1).
        let ones = Field2D::constant(grid, Placement::Node, 1.0);
        let via_star = star(&sol.field, &ones, 1.0).unwrap();
        let prefix = ll_prefix_table(&sol.field);
        let cols = grid.n_x() + 1;
        let mut via_expansion = Field2D::zeros(grid, Placement::Node);
        for i in 0..=grid.n_t() {
            for j in 0..=grid.n_x() {
                let q1 = (1.0 - grid.t_node(i)) * grid.x_node(j);
                let ql = prefix[grid.n_t() * cols + j] - prefix[i * cols + j];
                via_expansion.set(i, j, sol.field.at(i, j) * q1 + ql);
            }
        }
        assert!(via_star.sup_diff(&via_expansion).unwrap() < 1e-12);
    }

    #[test]
    fn l_solver_matches_dense_oracle() {
        let grid = GridSpec::new(1.0, 1.0, 8, 8).unwrap();
        let p = Field2D::constant(grid, Placement::Node, 2.0);
        let q = Field2D::zeros(grid, Placement::Node);
        let a0 = 0.35;
        let iterative = solve_l_fixed_point(&p, &q, a0, 0.0, 1.0, 1e-13, 1000).unwrap();
        // Same equation in dense form: L = -(a0 p) + (L * (-a0 1)) means
        // base = -a0 p and weight c = -a0.
        let base = p.map(|v| -a0 * v);
        let exact = dense::l_with_constant_weight(&base, -a0).unwrap();
        assert!(
            iterative.field.sup_diff(&exact).unwrap() < 1e-9,
            "diff {}",
            iterative.field.sup_diff(&exact).unwrap()
        );
    }

    #[test]
    fn adjoint_with_constant_terminal_and_no_drift_is_flat() {
        let grid = GridSpec::new(1.0, 1.0, 6, 6).unwrap();
        let sol = solve_adjoint_deterministic(0.0, 3.0, grid, 1e-12, 50).unwrap();
        let theta_field = Field2D::constant(grid, Placement::Node, 3.0);
        assert!(sol.p.sup_diff(&theta_field).unwrap() < 1e-14);
        assert!(sol.l.sup_norm() < 1e-14);
    }

    #[test]
    fn adjoint_solver_matches_dense_oracle() {
        let grid = GridSpec::new(1.0, 1.0, 8, 8).unwrap();
        let (a0, theta) = (0.4, 2.0);
        let sol = solve_adjoint_deterministic(a0, theta, grid, 1e-11, 500).unwrap();
        let (p_exact, l_exact) = dense::adjoint_pair(a0, theta, grid).unwrap();
        assert!(sol.p.sup_diff(&p_exact).unwrap() < 1e-8);
        assert!(sol.l.sup_diff(&l_exact).unwrap() < 1e-8);
        // Terminal corner carries exactly the terminal weight.
        assert_relative_eq!(sol.p.at(8, 8), theta, epsilon = 1e-12);
    }

    #[test]
    fn adjoint_is_linear_in_terminal_weight() {
        let grid = GridSpec::new(1.0, 1.0, 6, 6).unwrap();
        let s1 = solve_adjoint_deterministic(0.3, 1.0, grid, 1e-12, 500).unwrap();
        let s3 = solve_adjoint_deterministic(0.3, 3.0, grid, 1e-12, 500).unwrap();
        let scaled = s1.p.map(|v| 3.0 * v);
        assert!(s3.p.sup_diff(&scaled).unwrap() < 1e-9);
        let scaled_l = s1.l.map(|v| 3.0 * v);
        assert!(s3.l.sup_diff(&scaled_l).unwrap() < 1e-9);
    }

    #[test]
    fn derivative_checker_accepts_exact_and_flags_wrong() {
        let problem = ControlProblem {
            alpha: Arc::new(|z, y, u| z.0 * y - u),
            beta: Arc::new(|_, y, _| 0.5 * y),
            running_cost: Arc::new(|_, y, u| y * y - u * u),
            terminal_value: Arc::new(|y| 2.0 * y),
            t_horizon: 1.0,
            x_horizon: 1.0,
            y0: 1.0,
            control_bounds: None,
        };
        let derivs = ProblemDerivatives {
            alpha_y: Arc::new(|z, _, _| z.0),
            alpha_u: Arc::new(|_, _, _| -1.0),
            beta_y: Arc::new(|_, _, _| 0.5),
            beta_u: Arc::new(|_, _, _| 0.0),
            cost_y: Arc::new(|_, y, _| 2.0 * y),
            cost_u: Arc::new(|_, _, u| -2.0 * u),
            terminal_y: Arc::new(|_| 2.0),
        };
        let err = verify_derivatives(&problem, &derivs, 32, SeedSpec::new(7), 1e-5).unwrap();
        assert!(err < 1e-8, "err {err}");

        let mut wrong = derivs.clone();
        wrong.cost_u = Arc::new(|_, _, u| 2.0 * u);
        let err = verify_derivatives(&problem, &wrong, 32, SeedSpec::new(7), 1e-5).unwrap();
        assert!(err > 1e-2, "checker failed to flag a wrong derivative");
    }

    #[test]
    fn hamiltonian_value_assembles_all_terms() {
        let grid = GridSpec::new(1.0, 1.0, 8, 8).unwrap();
        let problem = ControlProblem {
            alpha: Arc::new(|_, y, u| -u * y),
            beta: Arc::new(|_, y, _| 0.7 * y),
            running_cost: Arc::new(|_, _, u| -u * u),
            terminal_value: Arc::new(|y| -y * y),
            t_horizon: 1.0,
            x_horizon: 1.0,
            y0: 1.0,
            control_bounds: None,
        };
        let derivs = ProblemDerivatives {
            alpha_y: Arc::new(|_, _, u| -u),
            alpha_u: Arc::new(|_, y, _| -y),
            beta_y: Arc::new(|_, _, _| 0.7),
            beta_u: Arc::new(|_, _, _| 0.0),
            cost_y: Arc::new(|_, _, _| 0.0),
            cost_u: Arc::new(|_, _, u| -2.0 * u),
            terminal_y: Arc::new(|y| -2.0 * y),
        };
        let h = Hamiltonian { problem, derivs };
        let l = Field2D::nodes(grid, |t, x| t * x);
        let (y, u, p, q) = (1.3, 0.8, 0.4, 0.2);
        let z = grid.node(3, 5);
        let got = h.value(z, y, u, p, q, &l).unwrap();
        // Independent assembly: constant drift field -u*y.
        let alpha_field = Field2D::constant(grid, Placement::Node, -u * y);
        let s = star(&l, &alpha_field, 1.0).unwrap();
        let want = -u * u + p * (-u * y) + q * (0.7 * y) + s.at(3, 5);
        assert_relative_eq!(got, want, epsilon = 1e-14);
    }

    #[test]
    fn dh_du_reports_singular_controls() {
        let grid = GridSpec::new(1.0, 1.0, 4, 4).unwrap();
        let problem = ControlProblem {
            alpha: Arc::new(|_, y, u| 0.1 * y - u),
            beta: Arc::new(|_, y, _| y),
            running_cost: Arc::new(|_, _, u| (u * u).ln()),
            terminal_value: Arc::new(|y| y),
            t_horizon: 1.0,
            x_horizon: 1.0,
            y0: 1.0,
            control_bounds: None,
        };
        let derivs = ProblemDerivatives {
            alpha_y: Arc::new(|_, _, _| 0.1),
            alpha_u: Arc::new(|_, _, _| -1.0),
            beta_y: Arc::new(|_, _, _| 1.0),
            beta_u: Arc::new(|_, _, _| 0.0),
            cost_y: Arc::new(|_, _, _| 0.0),
            cost_u: Arc::new(|_, _, u| 2.0 / u),
            terminal_y: Arc::new(|_| 1.0),
        };
        let h = Hamiltonian { problem, derivs };
        let zeros = Field2D::zeros(grid, Placement::Node);
        let ones = Field2D::constant(grid, Placement::Node, 1.0);
        // u = 0 makes cost_u = 2/u blow up.
        match h.dh_du_field(&ones, &zeros, &ones, &zeros, &zeros) {
            Err(Error::SingularDerivative(_)) => {}
            other => panic!("expected singular derivative, got {other:?}"),
        }
    }

    #[test]
    fn positivity_criterion_flips_at_the_root() {
        let r0 = find_r0(1e-12).unwrap();
        let bound = r0.sqrt();
        let z0 = (1.0, 1.0);
        assert!(positivity_criterion(bound - 1e-3, bound - 1e-3, z0).unwrap());
        assert!(!positivity_criterion(bound + 1e-3, bound - 1e-3, z0).unwrap());
        assert!(!positivity_criterion(bound - 1e-3, bound + 1e-3, z0).unwrap());
        // Scales with the rectangle area.
        assert!(positivity_criterion(bound * 1.9, bound * 1.9, (0.5, 1.0)).unwrap());
        assert!(positivity_criterion(-1.0, 0.0, z0).is_err());
    }
}
