//! Linear-quadratic control with a closed-form feedback law.
//!
//! The state is driven directly by the control with additive noise, and the
//! payoff penalizes control effort and terminal displacement:
//!
//! ```text
//! Y = y0 + int int u dz + int int b B(dz),
//! J(u) = E[ int -u^2/2 dz - theta Y(T,X)^2 / 2 ].
//! ```
//!
//! The candidate control is linear feedback in the state through the gain
//!
//! ```text
//! lambda(t,x) = 1 / ((1 - T + t) (1/theta + X - x)),
//! ```
//!
//! which solves the hyperbolic Riccati equation
//! `d^2 lambda / dt dx + lambda^2 = 0` with the right terminal data. As in
//! the one-parameter problem (where the optimal rule is `u = -Y/(1/theta +
//! T - t)`), the payoff-improving orientation applies the gain with a minus
//! sign, damping the state; [`evaluate`] measures the payoff under both
//! orientations so the comparison is explicit in every report. The gain at
//! the origin also ties the kernel to the mean growth equation:
//! `lambda(0,0) = theta m(T,X) / y0` for the solution `m` of
//! `m = y0 + int int lambda m`, exactly when the horizon pair satisfies the
//! scalar condition
//!
//! ```text
//! (1 - T) (1 + X theta) f(-log(1-T) log(1+X theta)) = 1,
//! ```
//!
//! `f` being the squared-factorial series. [`find_x`] solves this condition
//! for `X` given `T` and `theta`; [`evaluate`] verifies the whole chain
//! numerically (Riccati residual, scalar condition, deterministic and Monte
//! Carlo boundary identity, and the payoff gap to the sign-flipped feedback).

use std::sync::Arc;

use crate::adjoint::{Hamiltonian, ProblemDerivatives};
use crate::error::Error;
use crate::forward::{
    estimate_j, solve_mean_volterra, terminal_state_per_path, Control, ControlProblem, McEstimate,
};
use crate::grid::{Field2D, GridSpec, SeedSpec};
use crate::series::series_f;
use crate::Result;

/// Problem data: horizons, terminal weight, additive noise level, start.
#[derive(Clone, Copy, Debug)]
pub struct LqSpec {
    pub t_horizon: f64,
    pub x_horizon: f64,
    pub theta: f64,
    pub noise: f64,
    pub y0: f64,
}

impl LqSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_horizon > 0.0 && self.t_horizon < 1.0) {
            return Err(Error::Domain(format!(
                "time horizon must lie in (0, 1), got {}",
                self.t_horizon
            )));
        }
        if !(self.x_horizon > 0.0) {
            return Err(Error::Domain("space horizon must be positive".into()));
        }
        if !(self.theta > 0.0) {
            return Err(Error::Domain("terminal weight must be positive".into()));
        }
        if !(self.noise.is_finite() && self.y0.is_finite()) {
            return Err(Error::Domain("noise level and start must be finite".into()));
        }
        Ok(())
    }
}

/// The closed-form feedback gain.
pub fn lambda(spec: &LqSpec, t: f64, x: f64) -> f64 {
    1.0 / ((1.0 - spec.t_horizon + t) * (1.0 / spec.theta + spec.x_horizon - x))
}

pub fn lambda_field(spec: &LqSpec, grid: GridSpec) -> Field2D {
    Field2D::nodes(grid, |t, x| lambda(spec, t, x))
}

/// Central mixed finite difference of the Riccati equation at `(t, x)`:
/// `d^2 lambda/dt dx + lambda^2`, which the closed form sends to zero.
pub fn riccati_residual(spec: &LqSpec, t: f64, x: f64, h: f64) -> f64 {
    let mixed = (lambda(spec, t + h, x + h) - lambda(spec, t + h, x - h)
        - lambda(spec, t - h, x + h)
        + lambda(spec, t - h, x - h))
        / (4.0 * h * h);
    mixed + lambda(spec, t, x).powi(2)
}

/// Largest Riccati residual over a 3x3 lattice of interior probe points.
pub fn riccati_sup_residual(spec: &LqSpec, h: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for ft in [0.2, 0.5, 0.8] {
        for fx in [0.2, 0.5, 0.8] {
            worst = worst.max(
                riccati_residual(spec, ft * spec.t_horizon, fx * spec.x_horizon, h).abs(),
            );
        }
    }
    worst
}

/// Left side of the horizon condition; the pair `(T, X)` is admissible when
/// this equals one.
pub fn condition_value(t_horizon: f64, x_horizon: f64, theta: f64) -> Result<f64> {
    if !(t_horizon > 0.0 && t_horizon < 1.0 && x_horizon >= 0.0 && theta > 0.0) {
        return Err(Error::Domain(
            "condition needs 0 < T < 1, X >= 0, theta > 0".into(),
        ));
    }
    let a = -(1.0 - t_horizon).ln();
    let b = (1.0 + x_horizon * theta).ln();
    Ok((1.0 - t_horizon) * (1.0 + x_horizon * theta) * series_f(a * b)?.value)
}

/// Solves the horizon condition for `X` by bracketed bisection; the left
/// side is strictly increasing in `X` from `1 - T < 1`.
pub fn find_x(t_horizon: f64, theta: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0 && tol >= 1e-13) {
        return Err(Error::Domain(format!("condition tolerance {tol} below 1e-13")));
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while condition_value(t_horizon, hi, theta)? < 1.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::BracketNotFound(hi));
        }
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let c = condition_value(t_horizon, mid, theta)?;
        if (c - 1.0).abs() <= tol {
            return Ok(mid);
        }
        if c > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            return Err(Error::NoConvergence { residual: (c - 1.0).abs(), iterations: 0 });
        }
    }
}

pub fn problem(spec: &LqSpec) -> ControlProblem {
    let b = spec.noise;
    let theta = spec.theta;
    ControlProblem {
        alpha: Arc::new(|_, _, u| u),
        beta: Arc::new(move |_, _, _| b),
        running_cost: Arc::new(|_, _, u| -0.5 * u * u),
        terminal_value: Arc::new(move |y| -0.5 * theta * y * y),
        t_horizon: spec.t_horizon,
        x_horizon: spec.x_horizon,
        y0: spec.y0,
        control_bounds: None,
    }
}

pub fn derivatives(spec: &LqSpec) -> ProblemDerivatives {
    let theta = spec.theta;
    ProblemDerivatives {
        alpha_y: Arc::new(|_, _, _| 0.0),
        alpha_u: Arc::new(|_, _, _| 1.0),
        beta_y: Arc::new(|_, _, _| 0.0),
        beta_u: Arc::new(|_, _, _| 0.0),
        cost_y: Arc::new(|_, _, _| 0.0),
        cost_u: Arc::new(|_, _, u| -u),
        terminal_y: Arc::new(move |y| -theta * y),
    }
}

pub fn hamiltonian(spec: &LqSpec) -> Hamiltonian {
    Hamiltonian { problem: problem(spec), derivs: derivatives(spec) }
}

/// The closed-form feedback `u = lambda(z) y`, optionally sign-flipped.
pub fn feedback_control(spec: &LqSpec, flip_sign: bool) -> Control {
    let s = *spec;
    let sign = if flip_sign { -1.0 } else { 1.0 };
    Control::feedback(move |z, y| sign * lambda(&s, z.0, z.1) * y)
}

/// Everything [`evaluate`] measures about one LQ instance.
#[derive(Clone, Debug)]
pub struct LqEvaluation {
    /// `|condition - 1|` at the instance's own `(T, X, theta)`.
    pub condition_residual: f64,
    /// Sup of the finite-difference Riccati residual over probe points.
    pub riccati_sup_residual: f64,
    /// Relative error of `theta m(T,X) / y0` against `lambda(0,0)` with the
    /// mean equation solved on the fine deterministic grid.
    pub boundary_det_rel_err: f64,
    /// `theta (mean_hat - m(T,X)) / y0` on the Monte Carlo grid, where the
    /// discrete mean equation is exact in expectation, and its standard error.
    pub boundary_mc_diff: f64,
    pub boundary_mc_se: f64,
    pub j_feedback: McEstimate,
    pub j_negated: McEstimate,
}

/// Full numerical verification of one LQ instance. `det_grid` should be much
/// finer than `mc_grid`; both must share `spec`'s horizons.
pub fn evaluate(
    spec: &LqSpec,
    det_grid: GridSpec,
    mc_grid: GridSpec,
    n_paths: usize,
    seed: SeedSpec,
) -> Result<LqEvaluation> {
    spec.validate()?;
    let condition_residual =
        (condition_value(spec.t_horizon, spec.x_horizon, spec.theta)? - 1.0).abs();
    let riccati = riccati_sup_residual(spec, 1e-3);

    // Deterministic boundary identity on the fine grid.
    let m_det = solve_mean_volterra(&lambda_field(spec, det_grid), spec.y0)?;
    let gain0 = lambda(spec, 0.0, 0.0);
    let lhs_det = spec.theta * m_det.at(det_grid.n_t(), det_grid.n_x()) / spec.y0;
    let boundary_det_rel_err = ((lhs_det - gain0) / gain0).abs();

    // Monte Carlo cross-check against the same-grid discrete mean, which the
    // closed-loop simulation matches in expectation without grid bias.
    let prob = problem(spec);
    let fb = feedback_control(spec, false);
    let terminal = terminal_state_per_path(&prob, &fb, mc_grid, n_paths, seed)?;
    let est = McEstimate::from_samples(&terminal);
    let m_mc = solve_mean_volterra(&lambda_field(spec, mc_grid), spec.y0)?;
    let boundary_mc_diff =
        (spec.theta * (est.mean - m_mc.at(mc_grid.n_t(), mc_grid.n_x())) / spec.y0).abs();
    let boundary_mc_se = spec.theta * est.std_error / spec.y0.abs();

    let j_feedback = estimate_j(&prob, &fb, mc_grid, n_paths, seed)?;
    let j_negated = estimate_j(&prob, &feedback_control(spec, true), mc_grid, n_paths, seed)?;

    Ok(LqEvaluation {
        condition_residual,
        riccati_sup_residual: riccati,
        boundary_det_rel_err,
        boundary_mc_diff,
        boundary_mc_se,
        j_feedback,
        j_negated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::verify_derivatives;
    use crate::grid::Placement;
    use approx::assert_relative_eq;

    fn pinned_spec() -> LqSpec {
        let x = find_x(0.5, 1.0, 1e-12).unwrap();
        LqSpec { t_horizon: 0.5, x_horizon: x, theta: 1.0, noise: 1.0, y0: 1.0 }
    }

    #[test]
    fn closed_form_satisfies_riccati() {
        let spec = pinned_spec();
        assert!(riccati_sup_residual(&spec, 1e-3) < 1e-5);
    }

    #[test]
    fn condition_root_is_bracketed_and_tight() {
        let x = find_x(0.5, 1.0, 1e-12).unwrap();
        assert!(x > 0.5 && x < 0.55, "root {x}");
        assert!((condition_value(0.5, x, 1.0).unwrap() - 1.0).abs() <= 1e-12);
        assert!(condition_value(0.5, 0.5 * x, 1.0).unwrap() < 1.0);
        assert!(condition_value(0.5, 2.0 * x, 1.0).unwrap() > 1.0);
    }

    #[test]
    fn condition_rejects_bad_domains() {
        assert!(condition_value(1.0, 1.0, 1.0).is_err());
        assert!(condition_value(0.5, -1.0, 1.0).is_err());
        assert!(find_x(0.5, 1.0, 1e-20).is_err());
    }

    #[test]
    fn boundary_identity_holds_deterministically() {
        let spec = pinned_spec();
        let grid = GridSpec::new(spec.t_horizon, spec.x_horizon, 256, 256).unwrap();
        let m = solve_mean_volterra(&lambda_field(&spec, grid), spec.y0).unwrap();
        let lhs = spec.theta * m.at(256, 256) / spec.y0;
        let rhs = lambda(&spec, 0.0, 0.0);
        assert_relative_eq!(lhs, rhs, max_relative = 5e-3);
    }

    #[test]
    fn derivative_callbacks_match_finite_differences() {
        let spec = pinned_spec();
        let err =
            verify_derivatives(&problem(&spec), &derivatives(&spec), 32, SeedSpec::new(5), 1e-5)
                .unwrap();
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn hamiltonian_derivative_reduces_to_p_minus_u() {
        // With no nonlocal term the stationarity gradient is p - u.
        let spec = pinned_spec();
        let grid = GridSpec::new(spec.t_horizon, spec.x_horizon, 6, 6).unwrap();
        let h = hamiltonian(&spec);
        let y = Field2D::nodes(grid, |t, x| 1.0 + t * x);
        let u = Field2D::nodes(grid, |t, x| 0.3 * t - x);
        let p = Field2D::nodes(grid, |t, x| t + 2.0 * x);
        let q = Field2D::zeros(grid, Placement::Node);
        let l = Field2D::zeros(grid, Placement::Node);
        let got = h.dh_du_field(&y, &u, &p, &q, &l).unwrap();
        let want = p.zip_with(&u, |pv, uv| pv - uv).unwrap();
        assert!(got.sup_diff(&want).unwrap() < 1e-14);
    }

    #[test]
    fn damping_feedback_beats_amplifying_feedback() {
        // The gain enters with a minus sign in the payoff-improving direction:
        // u = -lambda y damps the state toward zero, u = +lambda y inflates
        // it and pays twice.
        let spec = pinned_spec();
        let grid = GridSpec::new(spec.t_horizon, spec.x_horizon, 32, 32).unwrap();
        let ev = evaluate(&spec, GridSpec::new(spec.t_horizon, spec.x_horizon, 64, 64).unwrap(),
            grid, 800, SeedSpec::new(17)).unwrap();
        let gap = ev.j_negated.mean - ev.j_feedback.mean;
        let se = (ev.j_feedback.std_error.powi(2) + ev.j_negated.std_error.powi(2)).sqrt();
        assert!(gap > 5.0 * se, "gap {gap} se {se}");
        assert!(ev.boundary_mc_diff <= 5.0 * ev.boundary_mc_se);
        assert!(ev.condition_residual < 1e-10);
    }
}
