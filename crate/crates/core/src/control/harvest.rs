//! Optimal harvesting with logarithmic yield.
//!
//! The population density grows linearly and is thinned by the harvest rate:
//!
//! ```text
//! Y = y0 + int int (a0 Y - u) dz + int int b0 Y B(dz),
//! J(u) = E[ int log(u^2) dz + theta Y(T,X) ].
//! ```
//!
//! The terminal reward is linear, so the adjoint pair does not depend on the
//! state and the deterministic adjoint solver applies as-is. Stationarity of
//! the Hamiltonian in `u` gives the candidate
//!
//! ```text
//! u*(z) = 2 / (p(z) + (L * 1)(z)),
//! ```
//!
//! singular wherever the denominator vanishes. With `a0 = 0` the adjoint
//! collapses to `p = theta`, `L = 0`, and the rate is the constant
//! `2 / theta`.

use std::sync::Arc;

use crate::adjoint::{solve_adjoint_deterministic, AdjointSolution, Hamiltonian, ProblemDerivatives};
use crate::calculus::star;
use crate::error::Error;
use crate::forward::{solve_forward, Control, ControlProblem};
use crate::grid::{sample_sheet, Field2D, GridSpec, Placement, SeedSpec};
use crate::Result;

/// Problem data: horizons, drift and noise slopes, terminal weight, start.
#[derive(Clone, Copy, Debug)]
pub struct HarvestSpec {
    pub t_horizon: f64,
    pub x_horizon: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub theta: f64,
    pub y0: f64,
}

impl HarvestSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_horizon > 0.0 && self.x_horizon > 0.0) {
            return Err(Error::Domain("horizons must be positive".into()));
        }
        let all_finite = [self.alpha0, self.beta0, self.theta, self.y0]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Domain("coefficients must be finite".into()));
        }
        // The coupled adjoint iteration contracts under this bound.
        if 2.0 * self.alpha0.abs() * self.t_horizon * self.x_horizon >= 1.0 {
            return Err(Error::Domain(format!(
                "drift slope too large for the adjoint fixed point: need 2 |a0| T X < 1, got {}",
                2.0 * self.alpha0.abs() * self.t_horizon * self.x_horizon
            )));
        }
        Ok(())
    }
}

pub fn problem(spec: &HarvestSpec) -> ControlProblem {
    let (a0, b0, theta) = (spec.alpha0, spec.beta0, spec.theta);
    ControlProblem {
        alpha: Arc::new(move |_, y, u| a0 * y - u),
        beta: Arc::new(move |_, y, _| b0 * y),
        running_cost: Arc::new(|_, _, u| (u * u).ln()),
        terminal_value: Arc::new(move |y| theta * y),
        t_horizon: spec.t_horizon,
        x_horizon: spec.x_horizon,
        y0: spec.y0,
        control_bounds: None,
    }
}

pub fn derivatives(spec: &HarvestSpec) -> ProblemDerivatives {
    let (a0, b0, theta) = (spec.alpha0, spec.beta0, spec.theta);
    ProblemDerivatives {
        alpha_y: Arc::new(move |_, _, _| a0),
        alpha_u: Arc::new(|_, _, _| -1.0),
        beta_y: Arc::new(move |_, _, _| b0),
        beta_u: Arc::new(|_, _, _| 0.0),
        cost_y: Arc::new(|_, _, _| 0.0),
        cost_u: Arc::new(|_, _, u| 2.0 / u),
        terminal_y: Arc::new(move |_| theta),
    }
}

pub fn hamiltonian(spec: &HarvestSpec) -> Hamiltonian {
    Hamiltonian { problem: problem(spec), derivs: derivatives(spec) }
}

/// The solved harvesting instance.
#[derive(Clone, Debug)]
pub struct HarvestSolution {
    pub adjoint: AdjointSolution,
    /// `(L * 1)` on the grid, the nonlocal correction to the adjoint price.
    pub l_star_one: Field2D,
    pub u_star: Field2D,
    /// Deterministic state under `u_star` (noise switched off).
    pub state: Field2D,
    /// Sup norm of the Hamiltonian's control derivative at the candidate.
    pub dh_du_sup: f64,
}

/// Threshold below which the stationarity denominator counts as singular.
const SINGULAR_DENOM_TOL: f64 = 1e-12;

pub fn solve(spec: &HarvestSpec, grid: GridSpec, tol: f64, max_iter: usize) -> Result<HarvestSolution> {
    spec.validate()?;
    let adjoint = solve_adjoint_deterministic(spec.alpha0, spec.theta, grid, tol, max_iter)?;
    let ones = Field2D::constant(grid, Placement::Node, 1.0);
    let l_star_one = star(&adjoint.l, &ones, grid.t_horizon())?;

    let mut u_star = Field2D::zeros(grid, Placement::Node);
    for i in 0..=grid.n_t() {
        for j in 0..=grid.n_x() {
            let denom = adjoint.p.at(i, j) + l_star_one.at(i, j);
            if denom.abs() < SINGULAR_DENOM_TOL {
                return Err(Error::SingularControl { i, j });
            }
            u_star.set(i, j, 2.0 / denom);
        }
    }

    // Deterministic state under the candidate rate; the noise slope is
    // irrelevant here, so solve with it switched off.
    let mut det = problem(spec);
    det.beta = Arc::new(|_, _, _| 0.0);
    let sheet = sample_sheet(grid, SeedSpec::new(0), 0);
    let sol = solve_forward(&det, &Control::field(u_star.clone()), &sheet)?;

    let q = Field2D::zeros(grid, Placement::Node);
    let dh_du = hamiltonian(spec).dh_du_field(&sol.y, &u_star, &adjoint.p, &q, &adjoint.l)?;

    Ok(HarvestSolution {
        adjoint,
        l_star_one,
        u_star,
        state: sol.y,
        dh_du_sup: dh_du.sup_norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::verify_derivatives;
    use approx::assert_relative_eq;

    fn base_spec() -> HarvestSpec {
        HarvestSpec {
            t_horizon: 1.0,
            x_horizon: 1.0,
            alpha0: 0.3,
            beta0: 0.5,
            theta: 2.0,
            y0: 1.0,
        }
    }

    #[test]
    fn zero_drift_gives_constant_rate() {
        let spec = HarvestSpec { alpha0: 0.0, ..base_spec() };
        let grid = GridSpec::new(1.0, 1.0, 8, 8).unwrap();
        let sol = solve(&spec, grid, 1e-11, 500).unwrap();
        let want = Field2D::constant(grid, Placement::Node, 2.0 / spec.theta);
        assert!(sol.u_star.sup_diff(&want).unwrap() < 1e-13);
        assert!(sol.l_star_one.sup_norm() < 1e-13);
        assert!(sol.dh_du_sup < 1e-12);
    }

    #[test]
    fn candidate_is_stationary_with_drift() {
        let spec = base_spec();
        let grid = GridSpec::new(1.0, 1.0, 12, 12).unwrap();
        let sol = solve(&spec, grid, 1e-11, 500).unwrap();
        // The rate is built to zero the same derivative expression, so the
        // residual is pure rounding.
        assert!(sol.dh_du_sup < 1e-10, "dh/du sup {}", sol.dh_du_sup);
        // The price declines from the origin toward the terminal corner
        // where it equals theta.
        assert_relative_eq!(sol.adjoint.p.at(12, 12), spec.theta, epsilon = 1e-12);
        assert!(sol.u_star.values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn rate_matches_dense_adjoint_oracle() {
        let spec = base_spec();
        let grid = GridSpec::new(1.0, 1.0, 8, 8).unwrap();
        let sol = solve(&spec, grid, 1e-12, 1000).unwrap();
        let (p, l) = crate::adjoint::dense::adjoint_pair(spec.alpha0, spec.theta, grid).unwrap();
        let ones = Field2D::constant(grid, Placement::Node, 1.0);
        let ls1 = star(&l, &ones, 1.0).unwrap();
        let u_exact = p.zip_with(&ls1, |pv, sv| 2.0 / (pv + sv)).unwrap();
        assert!(
            sol.u_star.sup_diff(&u_exact).unwrap() < 1e-8,
            "diff {}",
            sol.u_star.sup_diff(&u_exact).unwrap()
        );
    }

    #[test]
    fn zero_terminal_weight_is_singular() {
        let spec = HarvestSpec { alpha0: 0.0, theta: 0.0, ..base_spec() };
        let grid = GridSpec::new(1.0, 1.0, 4, 4).unwrap();
        match solve(&spec, grid, 1e-10, 100) {
            Err(Error::SingularControl { .. }) => {}
            other => panic!("expected singular control, got {other:?}"),
        }
    }

    #[test]
    fn drift_slope_bound_is_enforced() {
        let spec = HarvestSpec { alpha0: 0.6, ..base_spec() };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn derivative_callbacks_match_finite_differences() {
        let spec = base_spec();
        let err =
            verify_derivatives(&problem(&spec), &derivatives(&spec), 32, SeedSpec::new(11), 1e-5)
                .unwrap();
        assert!(err < 1e-7, "err {err}");
    }
}
