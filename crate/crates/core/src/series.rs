//! The entire series behind the mean dynamics of the multiplicative sheet
//! equation, Hermite polynomials and functions, and the sign probe.
//!
//! ```text
//! f(y)  = sum_{n>=0} y^n / (n!)^2          (entire; f(y) = I_0(2 sqrt(y)) for y >= 0)
//! f0(t) = sum_{j>=0} (-1)^j t^j / (j!)^2   (= f(-t) = J_0(2 sqrt(t)) for t >= 0)
//! ```
//!
//! `f0` changes sign; its first zero `r0` (~1.4458) bounds the solvability
//! window of linear backward equations on the plane. For large negative
//! arguments `f` oscillates with the closed asymptotic form
//! `(pi sqrt(|y|))^(-1/2) cos(2 sqrt(|y|) - pi/4)`.
//!
//! The probe for signed solutions evaluates
//!
//! ```text
//! b(u1) = y0 sum_{n>=0} eta^n (-1)^n h_n(u1) / (n!)^2
//! ```
//!
//! with `h_n` the probabilists' Hermite polynomials; a negative minimum over
//! a window of `u1` certifies that the multiplicative solution takes negative
//! values with positive probability.
//!
//! Terms are generated by ratio recurrences (as in any robust Bessel-series
//! evaluator): the `(n!)^2` denominator gives ratio `y / (n+1)^2`, so the
//! series converges fast once `(n+1)^2 > |y|` and the tail is bounded by a
//! geometric series from the first omitted term.

use crate::calculus::{lebesgue_integral, Rect};
use crate::error::Error;
use crate::grid::Field2D;
use crate::Result;

/// Largest argument magnitude accepted by the series evaluators.
pub const SERIES_DOMAIN: f64 = 700.0;

/// Relative cutoff: stop once the next term drops below this times the sum.
const SERIES_REL_TOL: f64 = 1e-16;

/// Iteration cap; generous since terms decay like 1/(n!)^2.
const SERIES_MAX_TERMS: usize = 500;

/// Probe series: keep terms until below this times the largest term seen.
const PROBE_REL_TOL: f64 = 1e-14;

/// Probe series hard cap on the number of terms.
const PROBE_MAX_TERMS: usize = 150;

/// Probe series divergence guard on term magnitude.
const PROBE_DIVERGENCE: f64 = 1e12;

/// A converged series evaluation.
#[derive(Clone, Copy, Debug)]
pub struct SeriesEval {
    pub value: f64,
    pub terms_used: usize,
    /// Bound on the omitted tail.
    pub truncation_bound: f64,
}

fn check_domain(y: f64) -> Result<()> {
    if !y.is_finite() || y.abs() > SERIES_DOMAIN {
        return Err(Error::Domain(format!(
            "series argument {y} outside [-{SERIES_DOMAIN}, {SERIES_DOMAIN}]"
        )));
    }
    Ok(())
}

/// `f(y) = sum y^n / (n!)^2`.
pub fn series_f(y: f64) -> Result<SeriesEval> {
    check_domain(y)?;
    let mut sum: f64 = 1.0;
    let mut term = 1.0;
    for n in 1..=SERIES_MAX_TERMS {
        term *= y / (n as f64 * n as f64);
        if term.abs() < SERIES_REL_TOL * sum.abs().max(f64::MIN_POSITIVE) {
            let ratio = y.abs() / ((n + 1) as f64 * (n + 1) as f64);
            let bound = if ratio < 1.0 {
                term.abs() / (1.0 - ratio)
            } else {
                term.abs()
            };
            return Ok(SeriesEval { value: sum, terms_used: n, truncation_bound: bound });
        }
        sum += term;
    }
    Err(Error::SeriesDiverged(term.abs()))
}

/// `f0(t) = sum (-1)^j t^j / (j!)^2` for `t >= 0`; equals `f(-t)`.
pub fn series_f0(t: f64) -> Result<SeriesEval> {
    if t < 0.0 {
        return Err(Error::Domain(format!("f0 takes t >= 0, got {t}")));
    }
    check_domain(t)?;
    let mut sum: f64 = 1.0;
    let mut term = 1.0;
    for j in 1..=SERIES_MAX_TERMS {
        term *= -t / (j as f64 * j as f64);
        if term.abs() < SERIES_REL_TOL * sum.abs().max(f64::MIN_POSITIVE) {
            return Ok(SeriesEval { value: sum, terms_used: j, truncation_bound: term.abs() });
        }
        sum += term;
    }
    Err(Error::SeriesDiverged(term.abs()))
}

/// First positive zero of `f0`, by bisection on `[1, 2]`.
pub fn find_r0(tol: f64) -> Result<f64> {
    if !(tol >= 1e-14) {
        return Err(Error::Domain(format!("bisection tolerance {tol} below 1e-14")));
    }
    let (mut lo, mut hi) = (1.0f64, 2.0f64);
    let f_lo = series_f0(lo)?.value;
    let f_hi = series_f0(hi)?.value;
    if f_lo <= 0.0 || f_hi >= 0.0 {
        return Err(Error::Domain("f0 does not change sign on [1, 2]".into()));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if series_f0(mid)?.value > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Oscillatory asymptotic of `f` for large negative arguments:
/// `(pi sqrt(|y|))^(-1/2) cos(2 sqrt(|y|) - pi/4)`, valid for `y <= -10`.
pub fn f0_asymptotic(y: f64) -> Result<f64> {
    if !(y <= -10.0) {
        return Err(Error::Domain(format!("asymptotic form needs y <= -10, got {y}")));
    }
    let r = y.abs().sqrt();
    Ok((2.0 * r - std::f64::consts::FRAC_PI_4).cos() / (std::f64::consts::PI * r).sqrt())
}

/// Probabilists' Hermite polynomial `h_n(x)`:
/// `h_0 = 1`, `h_1 = x`, `h_{n+1} = x h_n - n h_{n-1}`.
pub fn hermite_poly(n: usize, x: f64) -> Result<f64> {
    if n > 200 {
        return Err(Error::Domain(format!("hermite_poly degree {n} above 200")));
    }
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return Ok(prev);
    }
    for k in 1..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Orthonormal Hermite function `xi_n`, 1-indexed:
/// `xi_1(x) = pi^(-1/4) e^(-x^2/2)`, and
/// `xi_n = sqrt(2/(n-1)) x xi_{n-1} - sqrt((n-2)/(n-1)) xi_{n-2}`.
pub fn hermite_function(n: usize, x: f64) -> Result<f64> {
    if n == 0 || n > 50 {
        return Err(Error::Domain(format!("hermite_function index {n} outside 1..=50")));
    }
    let xi1 = std::f64::consts::PI.powf(-0.25) * (-x * x / 2.0).exp();
    if n == 1 {
        return Ok(xi1);
    }
    let mut prev = xi1;
    let mut cur = (2.0f64).sqrt() * x * xi1;
    for m in 3..=n {
        let k = (m - 1) as f64;
        let next = (2.0 / k).sqrt() * x * cur - ((k - 1.0) / k).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// First tensor basis element `mu_1(s, a) = xi_1(s) xi_1(a)`.
pub fn mu_1(s: f64, a: f64) -> f64 {
    let xi = |v: f64| std::f64::consts::PI.powf(-0.25) * (-v * v / 2.0).exp();
    xi(s) * xi(a)
}

/// Noise mass `eta = int_rect beta0 * mu_1`, lower-left rectangle rule.
pub fn eta(beta0: &Field2D, rect: Rect) -> Result<f64> {
    let weighted = Field2D::nodes(beta0.grid(), |s, a| mu_1(s, a)).zip_with(beta0, |m, b| m * b)?;
    lebesgue_integral(&weighted, rect)
}

/// Probe series `b(u1) = y0 sum_n eta^n (-1)^n h_n(u1) / (n!)^2`.
///
/// Stops once a term falls below `1e-14` of the largest term seen; errors if
/// a term exceeds the divergence guard or the cap of 150 terms is reached
/// without settling.
pub fn b_function(u1: f64, eta: f64, y0: f64) -> Result<SeriesEval> {
    let mut sum = y0;
    let mut coeff = y0; // y0 * (-eta)^n / (n!)^2
    let mut running_max = y0.abs();
    let (mut h_prev, mut h_cur) = (1.0, u1); // h_{n-1}, h_n starting at n = 1
    // Zeros of consecutive Hermite polynomials interlace, so one small term
    // can be a polynomial zero; two in a row cannot.
    let mut small_streak = 0usize;
    for n in 1..=PROBE_MAX_TERMS {
        coeff *= -eta / (n as f64 * n as f64);
        let term = coeff * h_cur;
        if term.abs() > PROBE_DIVERGENCE {
            return Err(Error::SeriesDiverged(term.abs()));
        }
        if term.abs() < PROBE_REL_TOL * running_max {
            small_streak += 1;
            if small_streak >= 2 {
                return Ok(SeriesEval { value: sum, terms_used: n, truncation_bound: term.abs() });
            }
        } else {
            small_streak = 0;
        }
        sum += term;
        running_max = running_max.max(term.abs());
        let h_next = u1 * h_cur - n as f64 * h_prev;
        h_prev = h_cur;
        h_cur = h_next;
    }
    Err(Error::NoConvergence { residual: f64::NAN, iterations: PROBE_MAX_TERMS })
}

/// Scan of `b` over a window of `u1` values.
#[derive(Clone, Debug)]
pub struct ProbeResult {
    /// `(u1, b(u1))` samples in scan order.
    pub samples: Vec<(f64, f64)>,
    pub min_value: f64,
    pub argmin: f64,
}

/// Evaluates the probe on `n_points` equally spaced `u1` values.
pub fn positivity_probe(
    eta: f64,
    y0: f64,
    u_min: f64,
    u_max: f64,
    n_points: usize,
) -> Result<ProbeResult> {
    if n_points < 2 || !(u_min < u_max) {
        return Err(Error::Domain("probe needs u_min < u_max and at least 2 points".into()));
    }
    if u_min.abs() > 8.0 || u_max.abs() > 8.0 {
        return Err(Error::Domain("probe window limited to |u1| <= 8".into()));
    }
    let mut samples = Vec::with_capacity(n_points);
    let (mut min_value, mut argmin) = (f64::INFINITY, u_min);
    for k in 0..n_points {
        let u1 = u_min + (u_max - u_min) * k as f64 / (n_points - 1) as f64;
        let b = b_function(u1, eta, y0)?.value;
        if b < min_value {
            min_value = b;
            argmin = u1;
        }
        samples.push((u1, b));
    }
    Ok(ProbeResult { samples, min_value, argmin })
}
