//! Learning-rate selection as a control problem on the plane.
//!
//! Training progress is indexed by epoch `t` and data fraction `x`; the loss
//! level decays at the chosen rate `u` and the payoff balances rate effort
//! against terminal loss:
//!
//! ```text
//! Y = y0 - int int u Y dz + int int b0 Y B(dz),
//! J(u) = E[ int -u^2 dz - theta Y(T,X)^2 ].
//! ```
//!
//! The quadratic terminal makes the adjoint state-dependent, so the solver
//! alternates forward and backward passes: solve the state under the current
//! rate, solve the adjoint pair
//!
//! ```text
//! p(z) = -2 theta Y(T,X) - Backward[u p + (L * u)](z),
//! L    = u p + (L * u),
//! ```
//!
//! then damp the stationarity update `u <- (1 - gamma) u + gamma u_hat`,
//! where `u_hat` zeroes `dH/du = -2u - Y p - (L * Y)` at the fixed point.
//! The sweep stops when the sup-norm update falls below `gamma * tol`, so
//! the stationarity residual at exit is at most about `tol`.
//!
//! The update target solves each node's stationarity jointly with the
//! `L` equation's own value at that node. Writing `Q_f(z)` for the integral
//! of `f` over `[t,T] x [0,x]`, the star products pin the pair
//! `(u(z), L(z))` given the fields elsewhere:
//!
//! ```text
//! L(z) (1 - Q_u(z)) = u(z) (p(z) + Q_L(z)),
//! 2 u(z) + Y(z) (p(z) + Q_L(z)) + L(z) Q_Y(z) = 0,
//! ```
//!
//! so the sweep eliminates `L(z)` and damps `u` toward
//!
//! ```text
//! u_hat(z) = -Y(z) (p(z) + Q_L(z)) / (2 D(z)),
//! D(z) = 1 + Q_Y(z) (p(z) + Q_L(z)) / (2 (1 - Q_u(z))).
//! ```
//!
//! At a joint fixed point `u_hat` equals the plain target
//! `-(Y p + (L * Y)) / 2`, so this choice moves the iteration, not the
//! solution. It matters on the far edge `x = X`, where the running cost and
//! the state no longer depend on the rate but the stationarity condition
//! still pins it: there `D` is small at the shipped parameters, the plain
//! update contracts like `1 - gamma D` per sweep, and the tail would need
//! hundreds of sweeps. Solving the pointwise pair directly removes that
//! slow mode; where `D` or `1 - Q_u` is smaller than a floor the sweep
//! falls back to the plain target, which is the stable (if slow) choice
//! near the singular set of the pointwise equation.

use std::sync::Arc;

use rayon::prelude::*;

use crate::adjoint::{backward_region_integral, solve_l_equation, Hamiltonian, ProblemDerivatives};
use crate::calculus::{ll_prefix_table, star};
use crate::error::Error;
use crate::forward::{path_cost, solve_forward, Control, ControlProblem, McEstimate, PathSolution};
use crate::grid::{sample_sheet, Field2D, GridSpec, Placement, SeedSpec};
use crate::Result;

/// Problem data; `noise` only enters the pathwise demonstration mode.
#[derive(Clone, Copy, Debug)]
pub struct MlSpec {
    pub t_horizon: f64,
    pub x_horizon: f64,
    pub theta: f64,
    pub noise: f64,
    pub y0: f64,
}

impl MlSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_horizon > 0.0 && self.x_horizon > 0.0) {
            return Err(Error::Domain("horizons must be positive".into()));
        }
        if !(self.theta >= 0.0) {
            return Err(Error::Domain("terminal weight must be nonnegative".into()));
        }
        if !(self.noise.is_finite() && self.y0.is_finite()) {
            return Err(Error::Domain("noise level and start must be finite".into()));
        }
        Ok(())
    }
}

pub fn problem(spec: &MlSpec) -> ControlProblem {
    let (b0, theta) = (spec.noise, spec.theta);
    ControlProblem {
        alpha: Arc::new(|_, y, u| -u * y),
        beta: Arc::new(move |_, y, _| b0 * y),
        running_cost: Arc::new(|_, _, u| -u * u),
        terminal_value: Arc::new(move |y| -theta * y * y),
        t_horizon: spec.t_horizon,
        x_horizon: spec.x_horizon,
        y0: spec.y0,
        control_bounds: None,
    }
}

pub fn derivatives(spec: &MlSpec) -> ProblemDerivatives {
    let (b0, theta) = (spec.noise, spec.theta);
    ProblemDerivatives {
        alpha_y: Arc::new(|_, _, u| -u),
        alpha_u: Arc::new(|_, y, _| -y),
        beta_y: Arc::new(move |_, _, _| b0),
        beta_u: Arc::new(|_, _, _| 0.0),
        cost_y: Arc::new(|_, _, _| 0.0),
        cost_u: Arc::new(|_, _, u| -2.0 * u),
        terminal_y: Arc::new(move |y| -2.0 * theta * y),
    }
}

pub fn hamiltonian(spec: &MlSpec) -> Hamiltonian {
    Hamiltonian { problem: problem(spec), derivs: derivatives(spec) }
}

/// Sweep parameters; the defaults converge on every shipped instance.
#[derive(Clone, Copy, Debug)]
pub struct SweepConfig {
    /// Damping factor on the stationarity update, in `(0, 1]`.
    pub gamma: f64,
    /// Target stationarity residual; the sweep stops when the sup-norm
    /// update falls below `gamma * tol`.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Tolerance for the inner adjoint fixed points.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { gamma: 0.5, tol: 1e-6, max_sweeps: 200, inner_tol: 1e-12, inner_max_iter: 20_000 }
    }
}

/// Result of one forward-backward sweep run, with residuals of every
/// equation in the system measured at the returned fields.
#[derive(Clone, Debug)]
pub struct SweepSolution {
    pub u: Field2D,
    pub y: Field2D,
    pub p: Field2D,
    pub l: Field2D,
    pub sweeps: usize,
    pub sup_update: f64,
    /// `sup |u + (Y p + (L * Y)) / 2|`.
    pub residual_stationarity: f64,
    pub residual_p: f64,
    pub residual_l: f64,
    pub residual_forward: f64,
    pub converged: bool,
    pub j_value: f64,
}

/// Cap on alternations between the `p` and `L` solves inside one backward
/// pass; the alternation contracts fast whenever the pass converges at all.
const BACKWARD_ALTERNATION_CAP: usize = 200;

/// Backward pair `(p, L)` for a fixed rate field and terminal value.
fn backward_pair(
    u: &Field2D,
    terminal: f64,
    l_init: &Field2D,
    cfg: &SweepConfig,
) -> Result<(Field2D, Field2D, f64, f64)> {
    let grid = u.grid();
    let horizon = grid.t_horizon();
    let scale = 1.0 + terminal.abs();
    let mut l = l_init.clone();
    let mut p = Field2D::constant(grid, Placement::Node, terminal);
    let mut residual_l = f64::INFINITY;
    let mut update_l = f64::INFINITY;
    for _ in 0..BACKWARD_ALTERNATION_CAP {
        // Affine Picard for p at fixed L.
        let s_lu = star(&l, u, horizon)?;
        for it in 1..=cfg.inner_max_iter {
            let driver = u.zip_with(&p, |uv, pv| uv * pv)?.zip_with(&s_lu, |a, b| a + b)?;
            let p_next = backward_region_integral(&driver)?.map(|bv| terminal - bv);
            let update = p.sup_diff(&p_next)?;
            p = p_next;
            if update <= cfg.inner_tol {
                break;
            }
            if !update.is_finite() || update > 1e8 * scale {
                return Err(Error::NoConvergence { residual: update, iterations: it });
            }
        }
        // L at fixed p.
        let base = u.zip_with(&p, |uv, pv| uv * pv)?;
        let l_sol = solve_l_equation(&base, u, horizon, cfg.inner_tol, cfg.inner_max_iter)?;
        update_l = l.sup_diff(&l_sol.field)?;
        l = l_sol.field;
        residual_l = l_sol.residual;
        if update_l <= cfg.inner_tol {
            break;
        }
    }
    if !(update_l <= 1e3 * cfg.inner_tol) {
        return Err(Error::NoConvergence {
            residual: update_l,
            iterations: BACKWARD_ALTERNATION_CAP,
        });
    }
    let s_lu = star(&l, u, horizon)?;
    let driver = u.zip_with(&p, |uv, pv| uv * pv)?.zip_with(&s_lu, |a, b| a + b)?;
    let residual_p = p.sup_diff(&backward_region_integral(&driver)?.map(|bv| terminal - bv))?;
    Ok((p, l, residual_p, residual_l))
}

/// Below this value of the pointwise coefficient `D` the implicit target is
/// abandoned for the plain one; see the module docs.
const POINTWISE_FLOOR: f64 = 1e-2;

/// The damped update's target rate: the solution of each node's stationarity
/// condition coupled with the `L` equation's value at that node, all other
/// field values frozen.
fn update_target(y: &Field2D, u: &Field2D, p: &Field2D, l: &Field2D) -> Field2D {
    let grid = y.grid();
    let cols = grid.n_x() + 1;
    let ih = grid.n_t();
    let (py, pu, pl) = (ll_prefix_table(y), ll_prefix_table(u), ll_prefix_table(l));
    let mut target = Field2D::zeros(grid, Placement::Node);
    for i in 0..=grid.n_t() {
        for j in 0..=grid.n_x() {
            let qy = py[ih * cols + j] - py[i * cols + j];
            let qu = pu[ih * cols + j] - pu[i * cols + j];
            let ql = pl[ih * cols + j] - pl[i * cols + j];
            let (yv, pv, lv) = (y.at(i, j), p.at(i, j), l.at(i, j));
            let denom = 1.0 - qu;
            let d = 1.0 + 0.5 * qy * (pv + ql) / denom;
            let v = if denom.abs() > POINTWISE_FLOOR && d.abs() > POINTWISE_FLOOR {
                -0.5 * yv * (pv + ql) / d
            } else {
                -0.5 * (yv * pv + lv * qy + yv * ql)
            };
            target.set(i, j, v);
        }
    }
    target
}

/// Forward sweep for a rate field with the noise switched off: the adapted
/// Euler recurrence for `Y = y0 - int int u Y`.
fn deterministic_state(u: &Field2D, y0: f64) -> Result<Field2D> {
    let grid = u.grid();
    let area = grid.cell_area();
    let mut y = Field2D::constant(grid, Placement::Node, y0);
    for i in 0..grid.n_t() {
        for j in 0..grid.n_x() {
            let next = y.at(i + 1, j) + y.at(i, j + 1) - y.at(i, j)
                - u.at(i, j) * y.at(i, j) * area;
            if !next.is_finite() {
                return Err(Error::BlowUp { i: i + 1, j: j + 1 });
            }
            y.set(i + 1, j + 1, next);
        }
    }
    Ok(y)
}

fn sweep_core(
    spec: &MlSpec,
    grid: GridSpec,
    cfg: &SweepConfig,
    forward: impl Fn(&Field2D) -> Result<Field2D>,
) -> Result<SweepSolution> {
    spec.validate()?;
    if !(cfg.gamma > 0.0 && cfg.gamma <= 1.0) {
        return Err(Error::Domain(format!("damping factor {} outside (0, 1]", cfg.gamma)));
    }
    let horizon = grid.t_horizon();
    let stop = cfg.gamma * cfg.tol;
    let mut u = Field2D::zeros(grid, Placement::Node);
    let mut l = Field2D::zeros(grid, Placement::Node);
    let mut sweeps = 0;
    let mut sup_update = f64::INFINITY;
    let mut converged = false;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let y = forward(&u)?;
        let terminal = -2.0 * spec.theta * y.at(grid.n_t(), grid.n_x());
        let (p, l_new, _, _) = backward_pair(&u, terminal, &l, cfg)?;
        l = l_new;
        let target = update_target(&y, &u, &p, &l);
        let u_next = u.zip_with(&target, |uv, gv| (1.0 - cfg.gamma) * uv + cfg.gamma * gv)?;
        sup_update = u.sup_diff(&u_next)?;
        u = u_next;
        if !sup_update.is_finite() {
            return Err(Error::NoConvergence { residual: sup_update, iterations: sweeps });
        }
        if sup_update <= stop {
            converged = true;
            break;
        }
    }

    // Recompute every field at the final rate and measure true residuals.
    let y = forward(&u)?;
    let terminal = -2.0 * spec.theta * y.at(grid.n_t(), grid.n_x());
    let (p, l, residual_p, residual_l) = backward_pair(&u, terminal, &l, cfg)?;
    let stationarity = u
        .zip_with(&y.zip_with(&p, |yv, pv| yv * pv)?, |uv, yp| uv + 0.5 * yp)?
        .zip_with(&star(&l, &y, horizon)?, |a, s| a + 0.5 * s)?;
    let drift = u.zip_with(&y, |uv, yv| -uv * yv)?;
    let prefix = ll_prefix_table(&drift);
    let cols = grid.n_x() + 1;
    let mut residual_forward: f64 = 0.0;
    for i in 0..=grid.n_t() {
        for j in 0..=grid.n_x() {
            residual_forward = residual_forward
                .max((y.at(i, j) - spec.y0 - prefix[i * cols + j]).abs());
        }
    }
    let j_value = path_cost(&problem(spec), grid, &PathSolution { y: y.clone(), u: u.clone() });
    Ok(SweepSolution {
        u,
        y,
        p,
        l,
        sweeps,
        sup_update,
        residual_stationarity: stationarity.sup_norm(),
        residual_p,
        residual_l,
        residual_forward,
        converged,
        j_value,
    })
}

/// Deterministic forward-backward sweep (noise off).
pub fn forward_backward_sweep(
    spec: &MlSpec,
    grid: GridSpec,
    cfg: &SweepConfig,
) -> Result<SweepSolution> {
    sweep_core(spec, grid, cfg, |u| deterministic_state(u, spec.y0))
}

/// Summary of per-path sweeps under sampled noise. The payoff statistics
/// cover converged paths only.
#[derive(Clone, Debug)]
pub struct PathwiseDemo {
    pub j: McEstimate,
    pub mean_sweeps: f64,
    pub n_converged: usize,
    pub n_paths: usize,
}

/// Demonstration mode: reruns the sweep on each sampled sheet path, so every
/// path gets its own rate schedule tuned against the noise it actually saw.
/// The resulting schedules peek at the whole sheet and are not adapted
/// controls; the output is meant for qualitative comparison only.
///
/// Noise can push the near-singular boundary stationarity (see the module
/// docs) past the point where a path's sweep settles; such paths count as
/// not converged and are left out of the payoff average rather than failing
/// the run.
pub fn pathwise_sweep_demo(
    spec: &MlSpec,
    grid: GridSpec,
    cfg: &SweepConfig,
    n_paths: usize,
    seed: SeedSpec,
) -> Result<PathwiseDemo> {
    if n_paths == 0 {
        return Err(Error::Domain("need at least one path".into()));
    }
    let prob = problem(spec);
    let results: Vec<Option<(f64, usize)>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let sheet = sample_sheet(grid, seed, k);
            let run = sweep_core(spec, grid, cfg, |u| {
                Ok(solve_forward(&prob, &Control::field(u.clone()), &sheet)?.y)
            });
            match run {
                Ok(sol) if sol.converged => {
                    let j = path_cost(&prob, grid, &PathSolution { y: sol.y, u: sol.u });
                    Some((j, sol.sweeps))
                }
                _ => None,
            }
        })
        .collect();
    let converged: Vec<(f64, usize)> = results.into_iter().flatten().collect();
    if converged.is_empty() {
        return Err(Error::NoConvergence { residual: f64::NAN, iterations: cfg.max_sweeps });
    }
    let js: Vec<f64> = converged.iter().map(|r| r.0).collect();
    Ok(PathwiseDemo {
        j: McEstimate::from_samples(&js),
        mean_sweeps: converged.iter().map(|r| r.1 as f64).sum::<f64>() / converged.len() as f64,
        n_converged: converged.len(),
        n_paths,
    })
}
