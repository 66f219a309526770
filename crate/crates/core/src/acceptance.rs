//! Desk-scale acceptance suite shared by the CLI selftest and the
//! integration tests.
//!
//! Every criterion reruns a pinned experiment (fixed grid, path count, and
//! seed, so each number below is reproducible bit for bit) and reduces it to
//! report rows whose tolerances are the named constants at the top of this
//! file. Monte Carlo rows compare against a multiple of their own standard
//! error; closed-form rows carry absolute or relative tolerances sized to
//! the quadrature order.
//!
//! One criterion ships as a recorded discrepancy rather than a target: the
//! linear-quadratic feedback law taken exactly as derived is not a
//! stationary point of its own payoff (see the sign discussion in
//! `control::lq`), so its dominance and derivative rows fail by wide,
//! reproducible margins. Those rows are listed in `expected_failures`, and
//! `CriterionOutcome::matches_expectation` holds only when every row's
//! verdict equals its shipped expectation. A regression in either direction,
//! a known-bad row quietly going green or a good row going red, therefore
//! fails the suite.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::adjoint::dense;
use crate::calculus::{ito_first, ito_second, lebesgue_integral, second_moment_rhs, Kernel2x2, Rect};
use crate::control::perturb::{dominance_report, DominanceReport};
use crate::control::{harvest, lq, ml};
use crate::forward::{
    negativity_experiment, solve_forward, solve_mean_volterra, Control, ControlProblem,
    McEstimate,
};
use crate::grid::{
    empirical_covariance, sample_sheet, Field2D, GridSpec, Placement, SeedSpec, SheetPath,
};
use crate::report::{CriterionReport, ReportRow};
use crate::series::{find_r0, positivity_probe, series_f};
use crate::{Point, Result};

/// Printed value of the first zero of the entire series `f`.
pub const R0_TARGET: f64 = 1.4458;
pub const R0_TOL: f64 = 1e-3;
pub const R0_TIME_LIMIT_S: f64 = 1.0;
pub const COVARIANCE_TIME_LIMIT_S: f64 = 30.0;
/// Statistical allowance for Monte Carlo equality rows.
pub const SE_MULTIPLE: f64 = 5.0;
/// Allowance for perturbation-dominance cells and derivative rows.
pub const DOMINANCE_SE_MULTIPLE: f64 = 2.0;
/// The zero-control contrast must move the payoff by more than this many
/// standard errors in some direction.
pub const CONTRAST_SE_MULTIPLE: f64 = 5.0;
pub const VOLTERRA_CONST_REL_TOL: f64 = 1e-3;
pub const VOLTERRA_LQ_REL_TOL: f64 = 5e-3;
pub const RICCATI_STEP: f64 = 1e-4;
pub const RICCATI_TOL: f64 = 1e-6;
pub const CONDITION_ROOT_TOL: f64 = 1e-10;
pub const BOUNDARY_DET_REL_TOL: f64 = 1e-3;
/// The flat-drift harvesting rate is a closed form the pipeline must hit
/// exactly; the tolerance only absorbs floating-point division.
pub const HARVEST_EXACT_TOL: f64 = 1e-12;
pub const HARVEST_DENSE_TOL: f64 = 1e-8;
pub const HARVEST_STATIONARITY_TOL: f64 = 1e-10;
pub const ML_SWEEP_LIMIT: usize = 200;
pub const ML_RESIDUAL_TOL: f64 = 1e-6;
/// Floating-point slack for deterministic dominance cells (every standard
/// error is exactly zero there, so the statistical allowance degenerates).
pub const ML_DET_SLACK: f64 = 1e-9;
/// Resolution floor for the deterministic central-difference derivative at
/// the learning-rate fixed point. The difference quotient measures the
/// discrete functional's derivative, which is separated from the certified
/// stationarity residual (<= 1e-6, criterion 12) by the scheme's first-order
/// consistency gap, of size about `h_t + h_x` = 1/16 on the pinned 32x32
/// grid, plus the O(eps^2) truncation of the central difference itself
/// (about 4e-3 at eps = 0.1). Measured values at the shipped instance are
/// 2.6e-2 and 2.2e-2; the floor is half an order above them.
pub const ML_DET_DERIVATIVE_TOL: f64 = 5e-2;

const MC_PATHS: usize = 10_000;
const IBP_PATHS: usize = 4_000;
const DOMINANCE_PATHS: usize = 2_000;
const DOMINANCE_EPSILONS: [f64; 2] = [0.1, 0.5];

/// A criterion's report plus the shipped expectation for each row.
#[derive(Clone, Debug)]
pub struct CriterionOutcome {
    pub report: CriterionReport,
    /// Metric names of rows shipped as expected failures: measured,
    /// recorded discrepancies rather than targets under repair.
    pub expected_failures: &'static [&'static str],
}

impl CriterionOutcome {
    fn clean(report: CriterionReport) -> Self {
        CriterionOutcome { report, expected_failures: &[] }
    }

    pub fn expected_pass(&self) -> bool {
        self.expected_failures.is_empty()
    }

    /// True when every row's verdict matches the shipped expectation and
    /// every expected failure is actually present among the rows.
    pub fn matches_expectation(&self) -> bool {
        let all_present = self
            .expected_failures
            .iter()
            .all(|name| self.report.rows.iter().any(|r| r.metric == *name));
        all_present
            && self
                .report
                .rows
                .iter()
                .all(|r| r.pass != self.expected_failures.contains(&r.metric.as_str()))
    }

    /// One-line verdict for terminal output.
    pub fn status_line(&self) -> String {
        let verdict = if self.report.pass() { "PASS" } else { "FAIL" };
        let suffix = if self.matches_expectation() {
            if self.expected_pass() { "" } else { " [expected failure: recorded discrepancy]" }
        } else {
            " [DOES NOT MATCH SHIPPED EXPECTATION]"
        };
        format!("criterion {:2}: {verdict}{suffix} - {}", self.report.index, self.report.name)
    }
}

fn pt(p: Point) -> String {
    format!("({} {})", p.0, p.1)
}

/// Samples an ensemble of sheet paths in parallel. Each path depends only on
/// the seed and its own index, so the ensemble is identical whatever the
/// worker count.
pub fn sheet_ensemble(grid: GridSpec, seed: SeedSpec, n_paths: usize) -> Vec<SheetPath> {
    (0..n_paths as u64).into_par_iter().map(|k| sample_sheet(grid, seed, k)).collect()
}

/// One covariance check: the sampled covariance at a node pair against the
/// sheet law `min(s,t) min(a,x)`, allowed [`SE_MULTIPLE`] standard errors.
pub fn covariance_row(paths: &[SheetPath], p1: Point, p2: Point) -> Result<ReportRow> {
    let est = empirical_covariance(paths, p1, p2)?;
    let target = p1.0.min(p2.0) * p1.1.min(p2.1);
    Ok(ReportRow::against_with_se(
        format!("cov {} {}", pt(p1), pt(p2)),
        est.covariance,
        est.std_error,
        target,
        SE_MULTIPLE * est.std_error,
    ))
}

/// Sampled variance of the first-type integral of `phi(t,x) = t`, with the
/// two reference values it should reproduce.
pub struct IsometryCheck {
    /// Sample variance of the integral over the ensemble.
    pub variance: f64,
    /// Standard error of the sample variance under the Gaussian law.
    pub std_error: f64,
    /// The grid quadrature of `phi^2` (the exact discrete target).
    pub quadrature: f64,
    /// The continuum integral of `phi^2` over the rectangle.
    pub continuum: f64,
}

/// Runs the isometry experiment for `phi(t,x) = t` on the given grid.
pub fn isometry_check(grid: GridSpec, seed: SeedSpec, n_paths: usize) -> Result<IsometryCheck> {
    let phi = Field2D::nodes(grid, |t, _| t);
    let vals: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let sheet = sample_sheet(grid, seed, k);
            ito_first(&phi, &sheet, Rect::full(grid))
        })
        .collect::<Result<_>>()?;
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let variance = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    // Standard error of the sample variance of a Gaussian sample.
    let std_error = variance * (2.0 / (n - 1.0)).sqrt();
    let phi2 = Field2D::nodes(grid, |t, _| t * t);
    let quadrature = lebesgue_integral(&phi2, Rect::full(grid))?;
    let (t, x) = (grid.t_horizon(), grid.x_horizon());
    Ok(IsometryCheck { variance, std_error, quadrature, continuum: t * t * t / 3.0 * x })
}

/// Paired per-path defect of the second-moment identity on the linear test
/// equation with drift `a0 y` and noise `b0 y`: each sampled sheet
/// contributes `Y^2(z) - rhs` with both sides evaluated on the same path, so
/// the martingale fluctuations cancel instead of inflating the error bar.
pub fn second_moment_defect(
    a0: f64,
    b0: f64,
    y0: f64,
    grid: GridSpec,
    seed: SeedSpec,
    n_paths: usize,
) -> Result<McEstimate> {
    let problem = ControlProblem {
        alpha: Arc::new(move |_, y, _| a0 * y),
        beta: Arc::new(move |_, y, _| b0 * y),
        running_cost: Arc::new(|_, _, _| 0.0),
        terminal_value: Arc::new(|_| 0.0),
        t_horizon: grid.t_horizon(),
        x_horizon: grid.x_horizon(),
        y0,
        control_bounds: None,
    };
    let solutions: Vec<Field2D> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let sheet = sample_sheet(grid, seed, k);
            Ok(solve_forward(&problem, &Control::zero(grid), &sheet)?.y)
        })
        .collect::<Result<_>>()?;
    let alphas: Vec<Field2D> = solutions.iter().map(|y| y.map(|v| a0 * v)).collect();
    let betas: Vec<Field2D> = solutions.iter().map(|y| y.map(|v| b0 * v)).collect();
    let z = (grid.t_horizon(), grid.x_horizon());
    let rhs = second_moment_rhs(&solutions, &alphas, &betas, z)?;
    let (nt, nx) = (grid.n_t(), grid.n_x());
    let diffs: Vec<f64> = solutions
        .iter()
        .zip(&rhs.per_path)
        .map(|(y, r)| y.at(nt, nx) * y.at(nt, nx) - r)
        .collect();
    Ok(McEstimate::from_samples(&diffs))
}

/// Criterion 1: the root of the entire series, against its printed value,
/// fast enough for interactive use.
pub fn criterion_series_root() -> Result<CriterionOutcome> {
    let t0 = Instant::now();
    let r0 = find_r0(1e-12)?;
    let secs = t0.elapsed().as_secs_f64();
    Ok(CriterionOutcome::clean(CriterionReport::new(
        1,
        "entire-series root",
        vec![
            ReportRow::against("series root r0", r0, R0_TARGET, R0_TOL),
            ReportRow::bounded("root-finding runtime (s)", secs, R0_TIME_LIMIT_S),
        ],
    )))
}

/// Criterion 2: the sampled sheet's covariance against `min(s,t) min(a,x)`
/// at six node pairs mixing comparable, incomparable, and repeated points.
pub fn criterion_sheet_covariance() -> Result<CriterionOutcome> {
    let pairs: [(Point, Point); 6] = [
        ((0.25, 0.25), (0.75, 0.75)),
        ((0.5, 1.0), (1.0, 0.5)),
        ((0.25, 0.75), (0.75, 0.25)),
        ((1.0, 1.0), (1.0, 1.0)),
        ((0.5, 0.5), (0.5, 0.5)),
        ((0.125, 0.9375), (0.9375, 0.125)),
    ];
    let grid = GridSpec::new(1.0, 1.0, 16, 16)?;
    let seed = SeedSpec::new(7);
    let t0 = Instant::now();
    let paths = sheet_ensemble(grid, seed, MC_PATHS);
    let mut rows = Vec::with_capacity(7);
    for (p1, p2) in pairs {
        rows.push(covariance_row(&paths, p1, p2)?);
    }
    rows.push(ReportRow::bounded(
        "covariance runtime (s)",
        t0.elapsed().as_secs_f64(),
        COVARIANCE_TIME_LIMIT_S,
    ));
    Ok(CriterionOutcome::clean(CriterionReport::new(2, "sheet covariance law", rows)))
}

/// Criterion 3: the isometry of the first-type integral for `phi(t,x) = t`.
/// The variance is judged against both the continuum value 1/3 and the
/// grid's own quadrature of `phi^2` (the latter is the exact discrete
/// identity; the former additionally absorbs the O(h) quadrature bias,
/// which is why this criterion runs on a 128x128 grid).
pub fn criterion_isometry() -> Result<CriterionOutcome> {
    let grid = GridSpec::new(1.0, 1.0, 128, 128)?;
    let check = isometry_check(grid, SeedSpec::new(7), MC_PATHS)?;
    let allowance = SE_MULTIPLE * check.std_error;
    Ok(CriterionOutcome::clean(CriterionReport::new(
        3,
        "first-type isometry",
        vec![
            ReportRow::against_with_se(
                "integral variance vs continuum",
                check.variance,
                check.std_error,
                check.continuum,
                allowance,
            ),
            ReportRow::against_with_se(
                "integral variance vs quadrature",
                check.variance,
                check.std_error,
                check.quadrature,
                allowance,
            ),
        ],
    )))
}

/// Criterion 4: the second-type integral is centered and uncorrelated with
/// a first-type integral (the orthogonality behind the second-moment
/// identity), tested with the flat kernel on its full support.
pub fn criterion_orthogonality() -> Result<CriterionOutcome> {
    let grid = GridSpec::new(1.0, 1.0, 16, 16)?;
    let seed = SeedSpec::new(11);
    let psi = Kernel2x2::on_support(grid, |_, _| 1.0);
    let phi = Field2D::constant(grid, Placement::Node, 1.0);
    let samples: Vec<(f64, f64)> = (0..MC_PATHS as u64)
        .into_par_iter()
        .map(|k| {
            let sheet = sample_sheet(grid, seed, k);
            Ok((ito_second(&psi, &sheet)?, ito_first(&phi, &sheet, Rect::full(grid))?))
        })
        .collect::<Result<_>>()?;
    let seconds: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let second = McEstimate::from_samples(&seconds);
    let first_mean = samples.iter().map(|s| s.1).sum::<f64>() / samples.len() as f64;
    let products: Vec<f64> = samples
        .iter()
        .map(|(a, b)| (a - second.mean) * (b - first_mean))
        .collect();
    let cov = McEstimate::from_samples(&products);
    Ok(CriterionOutcome::clean(CriterionReport::new(
        4,
        "second-type orthogonality",
        vec![
            ReportRow::against_with_se(
                "second-type integral mean",
                second.mean,
                second.std_error,
                0.0,
                SE_MULTIPLE * second.std_error,
            ),
            ReportRow::against_with_se(
                "covariance with first-type integral",
                cov.mean,
                cov.std_error,
                0.0,
                SE_MULTIPLE * cov.std_error,
            ),
        ],
    )))
}

/// Criterion 5: the second-moment identity on a linear equation with
/// state-proportional drift and noise, judged on paired per-path
/// differences so both sides share every sampled sheet.
pub fn criterion_second_moment_identity() -> Result<CriterionOutcome> {
    let grid = GridSpec::new(1.0, 1.0, 32, 32)?;
    let defect = second_moment_defect(0.3, 0.5, 1.0, grid, SeedSpec::new(41), IBP_PATHS)?;
    Ok(CriterionOutcome::clean(CriterionReport::new(
        5,
        "second-moment identity",
        vec![ReportRow::against_with_se(
            "paired second-moment defect",
            defect.mean,
            defect.std_error,
            0.0,
            SE_MULTIPLE * defect.std_error,
        )],
    )))
}

/// Criterion 6: the deterministic mean solver against the entire-series
/// closed form, for a constant gain and for the closed-form feedback gain.
pub fn criterion_volterra_mean() -> Result<CriterionOutcome> {
    let n = 256usize;
    let grid = GridSpec::new(0.5, 0.5, n, n)?;
    let flat = Field2D::constant(grid, Placement::Node, 1.0);
    let m = solve_mean_volterra(&flat, 1.0)?;
    let target = series_f(0.25)?.value;
    let rel_const = ((m.at(n, n) - target) / target).abs();

    let x = lq::find_x(0.5, 1.0, 1e-12)?;
    let spec = lq::LqSpec { t_horizon: 0.5, x_horizon: x, theta: 1.0, noise: 1.0, y0: 1.0 };
    let lq_grid = GridSpec::new(spec.t_horizon, spec.x_horizon, n, n)?;
    let m_lq = solve_mean_volterra(&lq::lambda_field(&spec, lq_grid), spec.y0)?;
    let arg = -(1.0 - spec.t_horizon).ln() * (1.0 + spec.x_horizon * spec.theta).ln();
    let target_lq = spec.y0 * series_f(arg)?.value;
    let rel_lq = ((m_lq.at(n, n) - target_lq) / target_lq).abs();
    Ok(CriterionOutcome::clean(CriterionReport::new(
        6,
        "volterra mean closed form",
        vec![
            ReportRow::bounded("constant-gain mean rel err", rel_const, VOLTERRA_CONST_REL_TOL),
            ReportRow::bounded("feedback-gain mean rel err", rel_lq, VOLTERRA_LQ_REL_TOL),
        ],
    )))
}

/// Criterion 7: the closed-form feedback gain solves its separable Riccati
/// equation, checked by central differences at five interior points.
pub fn criterion_riccati() -> Result<CriterionOutcome> {
    let spec = lq::LqSpec { t_horizon: 0.5, x_horizon: 1.0, theta: 1.0, noise: 1.0, y0: 1.0 };
    let rows = [(0.25, 0.5), (0.1, 0.2), (0.1, 0.8), (0.4, 0.2), (0.4, 0.8)]
        .into_iter()
        .map(|(t, x)| {
            ReportRow::bounded(
                format!("riccati residual {}", pt((t, x))),
                lq::riccati_residual(&spec, t, x, RICCATI_STEP).abs(),
                RICCATI_TOL,
            )
        })
        .collect();
    Ok(CriterionOutcome::clean(CriterionReport::new(7, "riccati closed form", rows)))
}

/// Criterion 8: the existence condition crosses one where expected, the
/// root finder lands on it, and the boundary identity
/// `lambda(0,0) = theta E[Y(T,X)] / Y(0,0)` holds in both the noiseless
/// fine-grid pipeline and the noisy Monte Carlo pipeline.
pub fn criterion_lq_condition() -> Result<CriterionOutcome> {
    let lo = lq::condition_value(0.5, 0.5, 1.0)?;
    let hi = lq::condition_value(0.5, 0.55, 1.0)?;
    let x = lq::find_x(0.5, 1.0, 1e-12)?;
    let spec = lq::LqSpec { t_horizon: 0.5, x_horizon: x, theta: 1.0, noise: 1.0, y0: 1.0 };
    let det = GridSpec::new(spec.t_horizon, spec.x_horizon, 256, 256)?;
    let mc = GridSpec::new(spec.t_horizon, spec.x_horizon, 64, 64)?;
    let ev = lq::evaluate(&spec, det, mc, MC_PATHS, SeedSpec::new(3))?;
    Ok(CriterionOutcome::clean(CriterionReport::new(
        8,
        "lq existence and boundary",
        vec![
            ReportRow::condition(
                "condition crosses one on (0.5 0.55)",
                lo < 1.0 && hi > 1.0,
                true,
            ),
            ReportRow::bounded(
                "condition residual at root",
                ev.condition_residual,
                CONDITION_ROOT_TOL,
            ),
            ReportRow::bounded(
                "deterministic boundary rel err",
                ev.boundary_det_rel_err,
                BOUNDARY_DET_REL_TOL,
            ),
            ReportRow::against_with_se(
                "noisy boundary defect",
                ev.boundary_mc_diff,
                ev.boundary_mc_se,
                0.0,
                SE_MULTIPLE * ev.boundary_mc_se,
            ),
        ],
    )))
}

/// Criterion 9: the sign mechanism. The series probe finds a window where
/// the candidate density dips below zero, and the multiplicative-noise
/// simulation produces terminally negative states with a fraction whose
/// lower confidence bound clears zero.
pub fn criterion_sign_mechanism() -> Result<CriterionOutcome> {
    let probe = positivity_probe(3.0, 1.0, -4.0, 4.0, 801)?;
    let grid = GridSpec::new(1.0, 1.0, 64, 64)?;
    let est = negativity_experiment(0.0, 1.0, 1.0, grid, MC_PATHS, SeedSpec::new(7))?;
    Ok(CriterionOutcome::clean(CriterionReport::new(
        9,
        "loss of positivity",
        vec![
            ReportRow::condition("series probe dips negative", probe.min_value < 0.0, true),
            ReportRow::condition(
                "negative-terminal fraction clears three se",
                est.fraction - 3.0 * est.std_error > 0.0,
                true,
            ),
        ],
    )))
}

/// Criterion 10: the harvesting pipeline. With flat drift the optimal rate
/// collapses to the closed form `2 / theta`; with drift the iterative
/// adjoint pair must match a dense linear-system solve and still zero the
/// Hamiltonian derivative.
pub fn criterion_harvest() -> Result<CriterionOutcome> {
    let grid = GridSpec::new(1.0, 1.0, 16, 16)?;
    let flat = harvest::HarvestSpec {
        t_horizon: 1.0,
        x_horizon: 1.0,
        alpha0: 0.0,
        beta0: 0.5,
        theta: 2.0,
        y0: 1.0,
    };
    let sol_flat = harvest::solve(&flat, grid, 1e-12, 10_000)?;
    let flat_dev =
        sol_flat.u_star.map(|v| (v - 2.0 / flat.theta).abs()).sup_norm();

    let drifted = harvest::HarvestSpec { alpha0: 0.1, ..flat };
    let sol = harvest::solve(&drifted, grid, 1e-12, 10_000)?;
    let (p_dense, l_dense) = dense::adjoint_pair(drifted.alpha0, drifted.theta, grid)?;
    let p_gap = sol.adjoint.p.sup_diff(&p_dense)?;
    let l_gap = sol.adjoint.l.sup_diff(&l_dense)?;
    Ok(CriterionOutcome::clean(CriterionReport::new(
        10,
        "harvesting pipeline",
        vec![
            ReportRow::bounded("flat-drift gap to closed form", flat_dev, HARVEST_EXACT_TOL),
            ReportRow::bounded(
                "flat-drift stationarity residual",
                sol_flat.dh_du_sup,
                HARVEST_STATIONARITY_TOL,
            ),
            ReportRow::bounded("adjoint gap to dense solve", p_gap, HARVEST_DENSE_TOL),
            ReportRow::bounded("auxiliary gap to dense solve", l_gap, HARVEST_DENSE_TOL),
            ReportRow::bounded(
                "drifted stationarity residual",
                sol.dh_du_sup,
                HARVEST_STATIONARITY_TOL,
            ),
        ],
    )))
}

fn dominance_rows(prefix: &str, rep: &DominanceReport, slack: f64) -> Vec<ReportRow> {
    let mut rows = Vec::with_capacity(rep.rows.len() + rep.derivatives.len());
    for r in &rep.rows {
        rows.push(ReportRow {
            metric: format!("{prefix} {} eps={} dominated", r.direction, r.epsilon),
            value: r.delta_mean,
            std_error: Some(r.delta_se),
            target: Some(0.0),
            tolerance: DOMINANCE_SE_MULTIPLE * r.delta_se + slack,
            pass: r.dominated,
        });
    }
    rows
}

/// Criterion 11: first-order optimality by perturbation. The
/// learning-rate fixed point dominates every tested perturbation and has a
/// derivative at the resolution floor; the zero control is detectably
/// suboptimal. The closed-form linear-quadratic feedback, taken exactly as
/// derived, fails both of its clauses by two orders of magnitude in
/// standard errors; those rows are shipped as expected failures (the
/// derivation's terminal adjoint sign rewards amplification, see
/// `control::lq`), and the suite asserts the failure stays put.
pub fn criterion_dominance() -> Result<CriterionOutcome> {
    let x = lq::find_x(0.5, 1.0, 1e-12)?;
    let spec = lq::LqSpec { t_horizon: 0.5, x_horizon: x, theta: 1.0, noise: 1.0, y0: 1.0 };
    let grid = GridSpec::new(spec.t_horizon, spec.x_horizon, 32, 32)?;
    let problem = lq::problem(&spec);
    let directions = vec![
        ("constant".to_string(), Field2D::constant(grid, Placement::Node, 1.0)),
        ("gain-shaped".to_string(), lq::lambda_field(&spec, grid)),
    ];
    let seed = SeedSpec::new(99);
    let feedback = lq::feedback_control(&spec, false);
    let rep_lq = dominance_report(
        &problem,
        &feedback,
        &directions,
        &DOMINANCE_EPSILONS,
        grid,
        DOMINANCE_PATHS,
        seed,
        0.0,
    )?;
    let mut rows = dominance_rows("lq", &rep_lq, 0.0);
    for d in &rep_lq.derivatives {
        rows.push(ReportRow::against_with_se(
            format!("lq {} derivative", d.direction),
            d.value,
            d.std_error,
            0.0,
            DOMINANCE_SE_MULTIPLE * d.std_error,
        ));
    }

    let rep_zero = dominance_report(
        &problem,
        &Control::zero(grid),
        &directions,
        &DOMINANCE_EPSILONS,
        grid,
        DOMINANCE_PATHS,
        seed,
        0.0,
    )?;
    rows.push(ReportRow::condition(
        "zero control is detectably suboptimal",
        rep_zero
            .derivatives
            .iter()
            .any(|d| d.value.abs() > CONTRAST_SE_MULTIPLE * d.std_error),
        true,
    ));

    let ml_spec = ml::MlSpec { t_horizon: 1.0, x_horizon: 1.0, theta: 1.0, noise: 0.0, y0: 1.0 };
    let ml_grid = GridSpec::new(1.0, 1.0, 32, 32)?;
    let fixed = ml::forward_backward_sweep(&ml_spec, ml_grid, &ml::SweepConfig::default())?;
    let ml_problem = ml::problem(&ml_spec);
    let ml_directions = vec![
        ("constant".to_string(), Field2D::constant(ml_grid, Placement::Node, 1.0)),
        ("state-shaped".to_string(), fixed.y.clone()),
    ];
    let rep_ml = dominance_report(
        &ml_problem,
        &Control::field(fixed.u.clone()),
        &ml_directions,
        &DOMINANCE_EPSILONS,
        ml_grid,
        1,
        SeedSpec::new(5),
        ML_DET_SLACK,
    )?;
    rows.extend(dominance_rows("ml", &rep_ml, ML_DET_SLACK));
    for d in &rep_ml.derivatives {
        rows.push(ReportRow::against(
            format!("ml {} derivative", d.direction),
            d.value,
            0.0,
            ML_DET_DERIVATIVE_TOL,
        ));
    }

    Ok(CriterionOutcome {
        report: CriterionReport::new(11, "perturbation dominance", rows),
        expected_failures: &[
            "lq constant eps=-0.1 dominated",
            "lq constant eps=-0.5 dominated",
            "lq gain-shaped eps=-0.1 dominated",
            "lq gain-shaped eps=-0.5 dominated",
            "lq constant derivative",
            "lq gain-shaped derivative",
        ],
    })
}

/// Criterion 12: the deterministic learning-rate sweep converges within the
/// sweep budget and certifies all of its defining equations at once.
pub fn criterion_ml_sweep() -> Result<CriterionOutcome> {
    let spec = ml::MlSpec { t_horizon: 1.0, x_horizon: 1.0, theta: 1.0, noise: 0.0, y0: 1.0 };
    let grid = GridSpec::new(1.0, 1.0, 32, 32)?;
    let sol = ml::forward_backward_sweep(&spec, grid, &ml::SweepConfig::default())?;
    Ok(CriterionOutcome::clean(CriterionReport::new(
        12,
        "learning-rate sweep",
        vec![
            ReportRow::condition("sweep converged", sol.converged, true),
            ReportRow::bounded("sweeps used", sol.sweeps as f64, ML_SWEEP_LIMIT as f64),
            ReportRow::bounded("final sup-update", sol.sup_update, ML_RESIDUAL_TOL),
            ReportRow::bounded(
                "stationarity residual",
                sol.residual_stationarity,
                ML_RESIDUAL_TOL,
            ),
            ReportRow::bounded("adjoint residual", sol.residual_p, ML_RESIDUAL_TOL),
            ReportRow::bounded("auxiliary residual", sol.residual_l, ML_RESIDUAL_TOL),
            ReportRow::bounded("forward residual", sol.residual_forward, ML_RESIDUAL_TOL),
        ],
    )))
}

/// Runs the whole suite in criterion order.
pub fn run_all() -> Result<Vec<CriterionOutcome>> {
    Ok(vec![
        criterion_series_root()?,
        criterion_sheet_covariance()?,
        criterion_isometry()?,
        criterion_orthogonality()?,
        criterion_second_moment_identity()?,
        criterion_volterra_mean()?,
        criterion_riccati()?,
        criterion_lq_condition()?,
        criterion_sign_mechanism()?,
        criterion_harvest()?,
        criterion_dominance()?,
        criterion_ml_sweep()?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expectation_matching_is_row_exact() {
        let good = ReportRow::bounded("ok", 0.0, 1.0);
        let bad = ReportRow::bounded("broken", 2.0, 1.0);
        let outcome = CriterionOutcome {
            report: CriterionReport::new(99, "demo", vec![good.clone(), bad.clone()]),
            expected_failures: &["broken"],
        };
        assert!(!outcome.report.pass());
        assert!(outcome.matches_expectation());
        assert!(!outcome.expected_pass());

        let unexpected_pass = CriterionOutcome {
            report: CriterionReport::new(99, "demo", vec![good.clone(), good.clone()]),
            expected_failures: &["broken"],
        };
        assert!(!unexpected_pass.matches_expectation());

        let missing_row = CriterionOutcome {
            report: CriterionReport::new(99, "demo", vec![good]),
            expected_failures: &["broken"],
        };
        assert!(!missing_row.matches_expectation());
    }

    #[test]
    fn status_lines_surface_expectations() {
        let outcome = CriterionOutcome {
            report: CriterionReport::new(
                7,
                "demo",
                vec![ReportRow::bounded("ok", 0.0, 1.0)],
            ),
            expected_failures: &[],
        };
        assert!(outcome.status_line().contains("PASS"));
        let failing = CriterionOutcome {
            report: CriterionReport::new(
                7,
                "demo",
                vec![ReportRow::bounded("broken", 2.0, 1.0)],
            ),
            expected_failures: &["broken"],
        };
        let line = failing.status_line();
        assert!(line.contains("FAIL"));
        assert!(line.contains("recorded discrepancy"));
    }
}
