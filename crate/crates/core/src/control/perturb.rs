//! Perturbation tables around a candidate control.
//!
//! A maximum-principle candidate should dominate nearby controls: for each
//! direction field `v` and signed magnitude `eps`, the payoff difference
//!
//! ```text
//! Delta(eps, v) = J(u + eps v) - J(u)
//! ```
//!
//! should be nonpositive up to Monte Carlo noise. Differences are measured
//! per path under common random numbers, so their standard error reflects
//! the (much smaller) variance of the pairwise gap rather than of the
//! payoffs themselves. A central-difference derivative along each direction
//! comes from the smallest magnitude pair:
//!
//! ```text
//! dJ/deps ~ (J(u + e v) - J(u - e v)) / (2 e),
//! ```
//!
//! which should vanish at an interior stationary candidate.

use std::collections::HashMap;

use crate::error::Error;
use crate::forward::{j_per_path, Control, ControlProblem, McEstimate};
use crate::grid::{Field2D, GridSpec, SeedSpec};
use crate::Result;

/// One perturbed payoff next to the base.
#[derive(Clone, Debug)]
pub struct PerturbationRow {
    pub direction: String,
    pub epsilon: f64,
    pub j: McEstimate,
    /// Mean and standard error of the per-path difference to the base.
    pub delta_mean: f64,
    pub delta_se: f64,
    /// `delta_mean <= 2 delta_se + slack`.
    pub dominated: bool,
}

/// Central-difference payoff derivative along one direction.
#[derive(Clone, Debug)]
pub struct DerivativeRow {
    pub direction: String,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug)]
pub struct DominanceReport {
    pub j_base: McEstimate,
    pub rows: Vec<PerturbationRow>,
    pub derivatives: Vec<DerivativeRow>,
}

/// Evaluates `J` at `u + eps v` for every direction and `eps` in
/// `{-m, +m : m in magnitudes}`, under common random numbers. With
/// deterministic dynamics pass `n_paths = 1` and a nonzero `slack`; all
/// standard errors are then zero and dominance is judged against the slack.
pub fn dominance_report(
    problem: &ControlProblem,
    base: &Control,
    directions: &[(String, Field2D)],
    magnitudes: &[f64],
    grid: GridSpec,
    n_paths: usize,
    seed: SeedSpec,
    slack: f64,
) -> Result<DominanceReport> {
    if directions.is_empty() || magnitudes.is_empty() {
        return Err(Error::Domain("need at least one direction and magnitude".into()));
    }
    if magnitudes.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::Domain("perturbation magnitudes must be positive".into()));
    }
    let mut mags = magnitudes.to_vec();
    mags.sort_by(f64::total_cmp);

    let base_paths = j_per_path(problem, base, grid, n_paths, seed)?;
    let j_base = McEstimate::from_samples(&base_paths);

    let mut rows = Vec::new();
    let mut derivatives = Vec::new();
    for (name, v) in directions {
        // Keyed by magnitude bits; signed pairs feed the derivative.
        let mut per_eps: HashMap<(u64, bool), Vec<f64>> = HashMap::new();
        for &m in &mags {
            for positive in [false, true] {
                let eps = if positive { m } else { -m };
                let control = base.perturbed(eps, v)?;
                let paths = j_per_path(problem, &control, grid, n_paths, seed)?;
                let deltas: Vec<f64> =
                    paths.iter().zip(&base_paths).map(|(a, b)| a - b).collect();
                let d = McEstimate::from_samples(&deltas);
                rows.push(PerturbationRow {
                    direction: name.clone(),
                    epsilon: eps,
                    j: McEstimate::from_samples(&paths),
                    delta_mean: d.mean,
                    delta_se: d.std_error,
                    dominated: d.mean <= 2.0 * d.std_error + slack,
                });
                per_eps.insert((m.to_bits(), positive), paths);
            }
        }
        let m0 = mags[0];
        let plus = &per_eps[&(m0.to_bits(), true)];
        let minus = &per_eps[&(m0.to_bits(), false)];
        let slopes: Vec<f64> =
            plus.iter().zip(minus).map(|(a, b)| (a - b) / (2.0 * m0)).collect();
        let est = McEstimate::from_samples(&slopes);
        derivatives.push(DerivativeRow {
            direction: name.clone(),
            value: est.mean,
            std_error: est.std_error,
        });
    }
    Ok(DominanceReport { j_base, rows, derivatives })
}
