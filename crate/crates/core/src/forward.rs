//! Forward simulation of hyperbolic SPDEs driven by the sheet.
//!
//! The state solves, in integrated form over the history rectangle,
//!
//! ```text
//! Y(t,x) = Y(0,0) + int_{R_{(t,x)}} alpha(z, Y, u) dz + int_{R_{(t,x)}} beta(z, Y, u) B(dz)
//! ```
//!
//! discretized by the adapted Euler scheme: each cell contributes
//! `alpha(corner) dt dx + beta(corner) dB` with every coefficient evaluated at
//! the cell's lower-left corner, so the integrand never peeks at the noise it
//! multiplies. Node values follow by rectangle additivity,
//!
//! ```text
//! Y[i+1][j+1] = Y[i+1][j] + Y[i][j+1] - Y[i][j] + contribution(cell i, j)
//! ```
//!
//! with `Y = Y(0,0)` on both boundary rows. The same sweep with
//! `alpha = lambda * m`, `beta = 0` solves the deterministic mean (Volterra)
//! equation `m = y0 + int int lambda m`; for constant `lambda = c` its limit
//! is `y0 * f(c t x)` with `f` the squared-factorial series from [`crate::series`].
//!
//! Monte Carlo estimators draw path `k` from substream `k` of a master seed
//! and reduce in path order, so results do not depend on thread count.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::Error;
use crate::grid::{sample_sheet, Field2D, GridSpec, Placement, SeedSpec, SheetPath};
use crate::{Point, Result};

/// Coefficient callback `(z, y, u) -> value`.
pub type CoefFn = Arc<dyn Fn(Point, f64, f64) -> f64 + Send + Sync>;
/// Terminal-value callback `y -> value`.
pub type TerminalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Feedback-control callback `(z, y) -> u`.
pub type FeedbackFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;

/// A controlled SPDE with performance functional
/// `J(u) = E[ int cost dz + terminal(Y(T,X)) ]`.
#[derive(Clone)]
pub struct ControlProblem {
    pub alpha: CoefFn,
    pub beta: CoefFn,
    pub running_cost: CoefFn,
    pub terminal_value: TerminalFn,
    pub t_horizon: f64,
    pub x_horizon: f64,
    pub y0: f64,
    /// Admissible clamp applied to every control evaluation, when present.
    pub control_bounds: Option<(f64, f64)>,
}

impl ControlProblem {
    pub fn grid(&self, n_t: usize, n_x: usize) -> Result<GridSpec> {
        GridSpec::new(self.t_horizon, self.x_horizon, n_t, n_x)
    }

    fn clamp(&self, u: f64) -> f64 {
        match self.control_bounds {
            Some((lo, hi)) => u.clamp(lo, hi),
            None => u,
        }
    }
}

/// An admissible control: an open-loop field on grid nodes, or a feedback
/// rule evaluated along the solution.
#[derive(Clone)]
pub enum Control {
    Field(Field2D),
    Feedback(FeedbackFn),
}

impl Control {
    pub fn field(f: Field2D) -> Self {
        Control::Field(f)
    }

    pub fn feedback(f: impl Fn(Point, f64) -> f64 + Send + Sync + 'static) -> Self {
        Control::Feedback(Arc::new(f))
    }

    pub fn zero(grid: GridSpec) -> Self {
        Control::Field(Field2D::zeros(grid, Placement::Node))
    }

    /// `self + eps * v` with `v` a node field; feedback rules keep their
    /// state dependence and gain an open-loop offset.
    pub fn perturbed(&self, eps: f64, v: &Field2D) -> Result<Control> {
        match self {
            Control::Field(f) => Ok(Control::Field(f.zip_with(v, |a, b| a + eps * b)?)),
            Control::Feedback(rule) => {
                let rule = rule.clone();
                let v = v.clone();
                Ok(Control::feedback(move |z: Point, y: f64| {
                    let (i, j) = v
                        .grid()
                        .node_index(z.0, z.1)
                        .expect("perturbation direction lives on the solver grid");
                    rule(z, y) + eps * v.at(i, j)
                }))
            }
        }
    }

    fn value(&self, z: Point, idx: (usize, usize), y: f64) -> f64 {
        match self {
            Control::Field(f) => f.at(idx.0, idx.1),
            Control::Feedback(rule) => rule(z, y),
        }
    }
}

/// One simulated trajectory: the state and the control actually applied.
#[derive(Clone, Debug)]
pub struct PathSolution {
    pub y: Field2D,
    pub u: Field2D,
}

/// Runs the adapted Euler sweep over one sheet path.
pub fn solve_forward(
    problem: &ControlProblem,
    control: &Control,
    sheet: &SheetPath,
) -> Result<PathSolution> {
    let grid = sheet.grid();
    if let Control::Field(f) = control {
        if f.grid() != grid || f.placement() != Placement::Node {
            return Err(Error::GridMismatch);
        }
    }
    let (n_t, n_x) = (grid.n_t(), grid.n_x());
    let area = grid.cell_area();
    let mut y = Field2D::constant(grid, Placement::Node, problem.y0);
    let mut u = Field2D::zeros(grid, Placement::Node);

    for i in 0..=n_t {
        for j in 0..=n_x {
            let z = grid.node(i, j);
            let yij = y.at(i, j);
            let uij = problem.clamp(control.value(z, (i, j), yij));
            u.set(i, j, uij);
            if i == n_t || j == n_x {
                continue;
            }
            let drift = (problem.alpha)(z, yij, uij) * area;
            let noise = (problem.beta)(z, yij, uij) * sheet.increment(i, j);
            let next = y.at(i + 1, j) + y.at(i, j + 1) - yij + drift + noise;
            if !next.is_finite() {
                return Err(Error::BlowUp { i: i + 1, j: j + 1 });
            }
            y.set(i + 1, j + 1, next);
        }
    }
    Ok(PathSolution { y, u })
}

/// Deterministic mean equation `m = y0 + int int lambda m` by the same
/// increasing sweep; `lambda` is node-placed.
pub fn solve_mean_volterra(lambda: &Field2D, y0: f64) -> Result<Field2D> {
    if lambda.placement() != Placement::Node {
        return Err(Error::GridMismatch);
    }
    let grid = lambda.grid();
    let area = grid.cell_area();
    let mut m = Field2D::constant(grid, Placement::Node, y0);
    for i in 0..grid.n_t() {
        for j in 0..grid.n_x() {
            let next = m.at(i + 1, j) + m.at(i, j + 1) - m.at(i, j)
                + lambda.at(i, j) * m.at(i, j) * area;
            if !next.is_finite() {
                return Err(Error::BlowUp { i: i + 1, j: j + 1 });
            }
            m.set(i + 1, j + 1, next);
        }
    }
    Ok(m)
}

/// Mean and standard error of a Monte Carlo sample.
#[derive(Clone, Copy, Debug)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let nf = n as f64;
        let mean = samples.iter().sum::<f64>() / nf;
        let var = if n > 1 {
            samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0)
        } else {
            0.0
        };
        McEstimate { mean, std_error: (var / nf).sqrt(), n_paths: n }
    }
}

/// Performance value of one trajectory.
pub fn path_cost(problem: &ControlProblem, grid: GridSpec, sol: &PathSolution) -> f64 {
    let area = grid.cell_area();
    let mut cost = 0.0;
    for i in 0..grid.n_t() {
        for j in 0..grid.n_x() {
            cost += (problem.running_cost)(grid.node(i, j), sol.y.at(i, j), sol.u.at(i, j)) * area;
        }
    }
    cost + (problem.terminal_value)(sol.y.at(grid.n_t(), grid.n_x()))
}

/// Per-path performance values under common random numbers: path `k` always
/// uses substream `k`, so two controls evaluated with the same seed see the
/// same noise.
pub fn j_per_path(
    problem: &ControlProblem,
    control: &Control,
    grid: GridSpec,
    n_paths: usize,
    seed: SeedSpec,
) -> Result<Vec<f64>> {
    if n_paths == 0 {
        return Err(Error::Domain("need at least one path".into()));
    }
    (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let sheet = sample_sheet(grid, seed, k);
            let sol = solve_forward(problem, control, &sheet)?;
            Ok(path_cost(problem, grid, &sol))
        })
        .collect::<Result<Vec<f64>>>()
}

/// Per-path terminal state `Y(T, X)` under common random numbers.
pub fn terminal_state_per_path(
    problem: &ControlProblem,
    control: &Control,
    grid: GridSpec,
    n_paths: usize,
    seed: SeedSpec,
) -> Result<Vec<f64>> {
    if n_paths == 0 {
        return Err(Error::Domain("need at least one path".into()));
    }
    (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let sheet = sample_sheet(grid, seed, k);
            let sol = solve_forward(problem, control, &sheet)?;
            Ok(sol.y.at(grid.n_t(), grid.n_x()))
        })
        .collect::<Result<Vec<f64>>>()
}

/// Monte Carlo estimate of `J(u)`.
pub fn estimate_j(
    problem: &ControlProblem,
    control: &Control,
    grid: GridSpec,
    n_paths: usize,
    seed: SeedSpec,
) -> Result<McEstimate> {
    Ok(McEstimate::from_samples(&j_per_path(problem, control, grid, n_paths, seed)?))
}

/// Fraction of multiplicative-equation paths whose state dips below zero.
#[derive(Clone, Copy, Debug)]
pub struct NegativityEstimate {
    pub fraction: f64,
    /// Binomial standard error `sqrt(p (1-p) / n)`.
    pub std_error: f64,
    pub n_negative: usize,
    pub n_paths: usize,
}

/// Simulates `Y = y0 + int int alpha0 Y + int int beta0 Y dB` and counts paths
/// with `min Y < 0` over all grid nodes.
pub fn negativity_experiment(
    alpha0: f64,
    beta0: f64,
    y0: f64,
    grid: GridSpec,
    n_paths: usize,
    seed: SeedSpec,
) -> Result<NegativityEstimate> {
    if n_paths == 0 {
        return Err(Error::Domain("need at least one path".into()));
    }
    let problem = ControlProblem {
        alpha: Arc::new(move |_, y, _| alpha0 * y),
        beta: Arc::new(move |_, y, _| beta0 * y),
        running_cost: Arc::new(|_, _, _| 0.0),
        terminal_value: Arc::new(|_| 0.0),
        t_horizon: grid.t_horizon(),
        x_horizon: grid.x_horizon(),
        y0,
        control_bounds: None,
    };
    let control = Control::zero(grid);
    let hits: Vec<bool> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let sheet = sample_sheet(grid, seed, k);
            let sol = solve_forward(&problem, &control, &sheet)?;
            Ok(sol.y.values().iter().any(|&v| v < 0.0))
        })
        .collect::<Result<Vec<bool>>>()?;
    let n_negative = hits.iter().filter(|&&h| h).count();
    let p = n_negative as f64 / n_paths as f64;
    Ok(NegativityEstimate {
        fraction: p,
        std_error: (p * (1.0 - p) / n_paths as f64).sqrt(),
        n_negative,
        n_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant_problem(a: f64, b: f64, y0: f64) -> ControlProblem {
        ControlProblem {
            alpha: Arc::new(move |_, _, _| a),
            beta: Arc::new(move |_, _, _| b),
            running_cost: Arc::new(|_, _, _| 0.0),
            terminal_value: Arc::new(|_| 0.0),
            t_horizon: 1.0,
            x_horizon: 1.0,
            y0,
            control_bounds: None,
        }
    }

    #[test]
    fn constant_coefficients_reproduce_closed_form() {
        // alpha = a, beta = b: Y(t,x) = y0 + a t x + b B(t,x), exactly.
        let grid = GridSpec::new(1.0, 1.0, 12, 9).unwrap();
        let (a, b, y0) = (0.7, 1.3, 2.0);
        let problem = constant_problem(a, b, y0);
        let sheet = sample_sheet(grid, SeedSpec::new(11), 4);
        let sol = solve_forward(&problem, &Control::zero(grid), &sheet).unwrap();
        for i in 0..=12 {
            for j in 0..=9 {
                let (t, x) = grid.node(i, j);
                assert_relative_eq!(
                    sol.y.at(i, j),
                    y0 + a * t * x + b * sheet.value(i, j),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn volterra_constant_kernel_matches_series() {
        let y0 = 1.0;
        let refine = |n: usize| -> f64 {
            let grid = GridSpec::new(1.0, 1.0, n, n).unwrap();
            let lambda = Field2D::constant(grid, Placement::Node, 1.0);
            let m = solve_mean_volterra(&lambda, y0).unwrap();
            m.at(n, n)
        };
        let want = 2.2795853023360668; // f(1)
        let errs: Vec<f64> = [32, 64, 128].iter().map(|&n| (refine(n) - want).abs()).collect();
        assert!(errs[2] / want < 0.01);
        // First-order scheme: halving the step should shrink the error with
        // observed order at least 0.9.
        let order01 = (errs[0] / errs[1]).log2();
        let order12 = (errs[1] / errs[2]).log2();
        assert!(order01 > 0.9 && order12 > 0.9, "orders {order01}, {order12}");
    }

    #[test]
    fn volterra_interior_node_matches_series() {
        let grid = GridSpec::new(1.0, 1.0, 256, 256).unwrap();
        let lambda = Field2D::constant(grid, Placement::Node, 1.0);
        let m = solve_mean_volterra(&lambda, 1.0).unwrap();
        // f(0.25) at the midpoint.
        assert_relative_eq!(m.at(128, 128), 1.2660658777520082, max_relative = 2e-3);
    }

    #[test]
    fn mc_mean_agrees_with_volterra_mean() {
        // Multiplicative drift and noise: E[Y_disc] solves the discrete mean
        // equation exactly, so the comparison has no discretization bias.
        let grid = GridSpec::new(1.0, 1.0, 16, 16).unwrap();
        let (a0, b0, y0) = (0.3, 0.5, 1.0);
        let problem = ControlProblem {
            alpha: Arc::new(move |_, y, _| a0 * y),
            beta: Arc::new(move |_, y, _| b0 * y),
            running_cost: Arc::new(|_, _, _| 0.0),
            terminal_value: Arc::new(|_| 0.0),
            t_horizon: 1.0,
            x_horizon: 1.0,
            y0,
            control_bounds: None,
        };
        let seed = SeedSpec::new(314);
        let n = 4000;
        let vals: Vec<f64> = (0..n)
            .map(|k| {
                let sheet = sample_sheet(grid, seed, k);
                let sol = solve_forward(&problem, &Control::zero(grid), &sheet).unwrap();
                sol.y.at(16, 16)
            })
            .collect();
        let est = McEstimate::from_samples(&vals);
        let lambda = Field2D::constant(grid, Placement::Node, a0);
        let m = solve_mean_volterra(&lambda, y0).unwrap();
        assert!(
            (est.mean - m.at(16, 16)).abs() <= 5.0 * est.std_error,
            "mc {} volterra {} se {}",
            est.mean,
            m.at(16, 16),
            est.std_error
        );
    }

    #[test]
    fn estimate_j_matches_gaussian_oracle() {
        // Zero control, additive noise, terminal -theta/2 y^2:
        // E[J] = -theta/2 (y0^2 + beta^2 T X), exact for the scheme.
        let grid = GridSpec::new(1.0, 1.0, 8, 8).unwrap();
        let (theta, b, y0) = (1.0, 1.0, 1.0);
        let problem = ControlProblem {
            alpha: Arc::new(|_, _, u| u),
            beta: Arc::new(move |_, _, _| b),
            running_cost: Arc::new(|_, _, u| -0.5 * u * u),
            terminal_value: Arc::new(move |y| -0.5 * theta * y * y),
            t_horizon: 1.0,
            x_horizon: 1.0,
            y0,
            control_bounds: None,
        };
        let est = estimate_j(&problem, &Control::zero(grid), grid, 4000, SeedSpec::new(9)).unwrap();
        let want = -0.5 * theta * (y0 * y0 + b * b);
        assert!((est.mean - want).abs() <= 5.0 * est.std_error);
    }

    #[test]
    fn j_per_path_is_deterministic_and_crn_pairs() {
        let grid = GridSpec::new(1.0, 1.0, 8, 8).unwrap();
        let problem = constant_problem(0.2, 0.7, 1.0);
        let seed = SeedSpec::new(55);
        let a = j_per_path(&problem, &Control::zero(grid), grid, 64, seed).unwrap();
        let b = j_per_path(&problem, &Control::zero(grid), grid, 64, seed).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn feedback_control_is_applied_adaptedly() {
        // u = lambda y with constant lambda and beta = 0 reduces to the
        // Volterra mean dynamics.
        let grid = GridSpec::new(1.0, 1.0, 32, 32).unwrap();
        let problem = ControlProblem {
            alpha: Arc::new(|_, _, u| u),
            beta: Arc::new(|_, _, _| 0.0),
            running_cost: Arc::new(|_, _, _| 0.0),
            terminal_value: Arc::new(|_| 0.0),
            t_horizon: 1.0,
            x_horizon: 1.0,
            y0: 1.0,
            control_bounds: None,
        };
        let lam = 0.8;
        let control = Control::feedback(move |_, y| lam * y);
        let sheet = sample_sheet(grid, SeedSpec::new(3), 0);
        let sol = solve_forward(&problem, &control, &sheet).unwrap();
        let lambda = Field2D::constant(grid, Placement::Node, lam);
        let m = solve_mean_volterra(&lambda, 1.0).unwrap();
        assert!(sol.y.sup_diff(&m).unwrap() < 1e-12);
    }

    #[test]
    fn blow_up_is_reported_with_node() {
        let grid = GridSpec::new(1.0, 1.0, 8, 8).unwrap();
        let problem = ControlProblem {
            alpha: Arc::new(|_, y, _| y * y),
            beta: Arc::new(|_, _, _| 0.0),
            running_cost: Arc::new(|_, _, _| 0.0),
            terminal_value: Arc::new(|_| 0.0),
            t_horizon: 1.0,
            x_horizon: 1.0,
            y0: 1e3,
            control_bounds: None,
        };
        let sheet = sample_sheet(grid, SeedSpec::new(1), 0);
        match solve_forward(&problem, &Control::zero(grid), &sheet) {
            Err(Error::BlowUp { .. }) => {}
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn negativity_probability_is_scale_invariant() {
        // The multiplicative equation is linear in y0, so the sign pattern and
        // the estimate are identical under common random numbers.
        let grid = GridSpec::new(1.0, 1.0, 16, 16).unwrap();
        let seed = SeedSpec::new(21);
        let a = negativity_experiment(0.0, 1.0, 1.0, grid, 500, seed).unwrap();
        let b = negativity_experiment(0.0, 1.0, 2.5, grid, 500, seed).unwrap();
        assert_eq!(a.n_negative, b.n_negative);
        assert!(a.fraction <= b.fraction + 1e-15);
    }

    #[test]
    fn negativity_shows_up_at_unit_noise() {
        let grid = GridSpec::new(1.0, 1.0, 32, 32).unwrap();
        let est = negativity_experiment(0.0, 1.0, 1.0, grid, 2000, SeedSpec::new(8)).unwrap();
        assert!(
            est.fraction - 3.0 * est.std_error > 0.0,
            "fraction {} se {}",
            est.fraction,
            est.std_error
        );
    }

    #[test]
    fn control_perturbation_offsets_feedback() {
        let grid = GridSpec::new(1.0, 1.0, 4, 4).unwrap();
        let base = Control::feedback(|_, y| 2.0 * y);
        let v = Field2D::nodes(grid, |t, x| t + x);
        let pert = base.perturbed(0.5, &v).unwrap();
        let got = pert.value(grid.node(2, 3), (2, 3), 1.5);
        assert_relative_eq!(got, 3.0 + 0.5 * (0.5 + 0.75), epsilon = 1e-15);
    }
}
