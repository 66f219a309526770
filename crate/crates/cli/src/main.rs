//! `sheetctl`: runs the library's experiments from the command line and
//! writes machine-readable reports.
//!
//! ```text
//! sheetctl <experiment> [--config file.json] [--grid-nt N] [--grid-nx N]
//!          [--paths N] [--seed S] [--T v] [--X v] [--theta v]
//!          [--alpha0 v] [--beta0 v] [--tol v] [--out dir]
//! ```
//!
//! Experiments: `sheet-check`, `isometry`, `ibp`, `positivity`,
//! `negativity`, `lq`, `harvest`, `ml`, `r0`, and `selftest` (the full
//! acceptance suite).
//!
//! Parameters resolve in three layers: built-in defaults for the chosen
//! experiment, then the JSON config file, then command-line flags, with
//! later layers winning. The config file accepts the flag names plus two
//! keys without flags, `y0` and `eta`. Every run writes the resolved
//! parameters to `params.json` and one `results.csv` line per check into
//! the output directory; experiments that produce whole fields also write
//! `field_<name>.csv` tables of `t,x,value` rows.
//!
//! Exit code 0 means every check passed (for `selftest`, every criterion
//! matched its shipped status, including the recorded expected failure).
//! Exit code 1 means the run finished but a check failed or the numerics
//! diverged. Exit code 2 means the invocation was unusable: unknown
//! experiment or flag, malformed config, parameters the solvers reject,
//! or an unwritable output directory.
//!
//! Reports are deterministic in the resolved parameters: each sampled
//! path derives its generator from the master seed and the path index
//! alone and reductions run in a fixed order, so a rerun produces a
//! byte-identical `results.csv` whatever the worker count. Wall-clock
//! measurements are therefore confined to the terminal, never the CSV.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use sheet_control::acceptance::{
    self, covariance_row, isometry_check, second_moment_defect, sheet_ensemble,
};
use sheet_control::control::{harvest, lq, ml};
use sheet_control::forward::negativity_experiment;
use sheet_control::grid::{Field2D, GridSpec, SeedSpec};
use sheet_control::report::ReportRow;
use sheet_control::series::{find_r0, positivity_probe};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Experiment {
    /// Sampled sheet covariance against the product-of-minima law.
    SheetCheck,
    /// Variance of a first-type integral against the isometry.
    Isometry,
    /// Paired check of the second-moment identity on a linear equation.
    Ibp,
    /// Scan of the order-condition bracket for a sign change.
    Positivity,
    /// Fraction of paths whose state goes negative under pure noise.
    Negativity,
    /// Linear-quadratic instance: condition root, Riccati gain, payoffs.
    Lq,
    /// Harvesting instance: adjoint pair, candidate rate, stationarity.
    Harvest,
    /// Learning-rate schedule by forward-backward sweep.
    Ml,
    /// Root of the entire series.
    R0,
    /// The acceptance suite, one pass/fail line per criterion.
    Selftest,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Experiment::SheetCheck => "sheet-check",
            Experiment::Isometry => "isometry",
            Experiment::Ibp => "ibp",
            Experiment::Positivity => "positivity",
            Experiment::Negativity => "negativity",
            Experiment::Lq => "lq",
            Experiment::Harvest => "harvest",
            Experiment::Ml => "ml",
            Experiment::R0 => "r0",
            Experiment::Selftest => "selftest",
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "sheetctl",
    version,
    about = "Runs sheet experiments and writes params.json, results.csv, and field CSVs"
)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    experiment: Experiment,

    /// JSON config file; flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Grid steps in t.
    #[arg(long, value_name = "N")]
    grid_nt: Option<usize>,

    /// Grid steps in x.
    #[arg(long, value_name = "N")]
    grid_nx: Option<usize>,

    /// Monte Carlo path count.
    #[arg(long, value_name = "N")]
    paths: Option<usize>,

    /// Master seed of the path family.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,

    /// Time horizon.
    #[arg(long = "T", value_name = "V")]
    t_horizon: Option<f64>,

    /// Space horizon; the lq experiment solves the order condition for it
    /// when omitted.
    #[arg(long = "X", value_name = "V")]
    x_horizon: Option<f64>,

    /// Terminal weight.
    #[arg(long, value_name = "V")]
    theta: Option<f64>,

    /// Drift slope.
    #[arg(long, value_name = "V")]
    alpha0: Option<f64>,

    /// Noise slope.
    #[arg(long, value_name = "V")]
    beta0: Option<f64>,

    /// Root-finder, fixed-point, or sweep tolerance, per experiment.
    #[arg(long, value_name = "V")]
    tol: Option<f64>,

    /// Output directory; defaults to sheetctl-<experiment>.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

/// The config file mirrors the flags, plus `y0` and `eta` which have no
/// flag. Unknown keys are rejected rather than silently ignored.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(rename = "T")]
    t_horizon: Option<f64>,
    #[serde(rename = "X")]
    x_horizon: Option<f64>,
    grid_nt: Option<usize>,
    grid_nx: Option<usize>,
    paths: Option<usize>,
    seed: Option<u64>,
    theta: Option<f64>,
    alpha0: Option<f64>,
    beta0: Option<f64>,
    y0: Option<f64>,
    eta: Option<f64>,
    tol: Option<f64>,
    out: Option<PathBuf>,
}

/// Fully resolved run parameters, recorded verbatim as `params.json`.
/// Fields an experiment does not consume keep their defaults.
#[derive(Clone, Debug, Serialize)]
struct Params {
    experiment: &'static str,
    #[serde(rename = "T")]
    t_horizon: f64,
    #[serde(rename = "X")]
    x_horizon: f64,
    grid_nt: usize,
    grid_nx: usize,
    paths: usize,
    seed: u64,
    theta: f64,
    alpha0: f64,
    beta0: f64,
    y0: f64,
    eta: f64,
    tol: f64,
}

#[derive(Debug)]
enum CliError {
    /// The invocation cannot run: exit 2.
    Usage(String),
    /// The run finished or aborted with a numeric problem: exit 1.
    Numeric(String),
}

fn usage(e: impl Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn numeric(e: impl Display) -> CliError {
    CliError::Numeric(e.to_string())
}

struct ExperimentOutput {
    rows: Vec<ReportRow>,
    fields: Vec<(&'static str, Field2D)>,
}

impl ExperimentOutput {
    fn rows(rows: Vec<ReportRow>) -> Self {
        ExperimentOutput { rows, fields: Vec::new() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    let exp = cli.experiment;
    let params = resolve(exp, &cli, &cfg)?;
    let out_dir = cli
        .out
        .or(cfg.out)
        .unwrap_or_else(|| PathBuf::from(format!("sheetctl-{}", exp.name())));

    if exp == Experiment::Selftest {
        return selftest(&params, &out_dir);
    }

    let output = run_experiment(exp, &params)?;
    print_report(&params, &output.rows);
    write_artifacts(&out_dir, &params, &output.rows, &output.fields)?;
    let passed = output.rows.iter().all(|r| r.pass);
    println!("result: {}", if passed { "PASS" } else { "FAIL" });
    println!("wrote {}", out_dir.display());
    Ok(passed)
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

/// Built-in defaults per experiment. Grid sizes and path counts are the
/// desk-scale settings the acceptance suite pins; seeds are arbitrary but
/// frozen so default runs are reproducible.
fn defaults(exp: Experiment) -> Params {
    let mut p = Params {
        experiment: exp.name(),
        t_horizon: 1.0,
        x_horizon: 1.0,
        grid_nt: 16,
        grid_nx: 16,
        paths: 10_000,
        seed: 7,
        theta: 1.0,
        alpha0: 0.0,
        beta0: 1.0,
        y0: 1.0,
        eta: 3.0,
        tol: 1e-6,
    };
    match exp {
        Experiment::SheetCheck | Experiment::Positivity | Experiment::Selftest => {}
        Experiment::Isometry => {
            p.grid_nt = 128;
            p.grid_nx = 128;
        }
        Experiment::Ibp => {
            p.grid_nt = 32;
            p.grid_nx = 32;
            p.paths = 4_000;
            p.seed = 41;
            p.alpha0 = 0.3;
            p.beta0 = 0.5;
        }
        Experiment::Negativity => {
            p.grid_nt = 64;
            p.grid_nx = 64;
        }
        Experiment::Lq => {
            p.t_horizon = 0.5;
            p.grid_nt = 64;
            p.grid_nx = 64;
            p.seed = 3;
            p.tol = 1e-12;
        }
        Experiment::Harvest => {
            p.alpha0 = 0.1;
            p.beta0 = 0.5;
            p.theta = 2.0;
            p.tol = 1e-12;
        }
        Experiment::Ml => {
            p.grid_nt = 32;
            p.grid_nx = 32;
            p.beta0 = 0.0;
            p.seed = 5;
            p.paths = 64;
        }
        Experiment::R0 => {
            p.tol = 1e-12;
        }
    }
    p
}

fn resolve(exp: Experiment, cli: &Cli, cfg: &FileConfig) -> Result<Params, CliError> {
    let d = defaults(exp);
    let t_horizon = cli.t_horizon.or(cfg.t_horizon).unwrap_or(d.t_horizon);
    let theta = cli.theta.or(cfg.theta).unwrap_or(d.theta);
    let x_horizon = match cli.x_horizon.or(cfg.x_horizon) {
        Some(x) => x,
        // The lq instance is only well posed on a root of the order
        // condition, so the horizon is solved for unless pinned by hand.
        None if exp == Experiment::Lq => lq::find_x(t_horizon, theta, 1e-12).map_err(usage)?,
        None => d.x_horizon,
    };
    Ok(Params {
        experiment: d.experiment,
        t_horizon,
        x_horizon,
        grid_nt: cli.grid_nt.or(cfg.grid_nt).unwrap_or(d.grid_nt),
        grid_nx: cli.grid_nx.or(cfg.grid_nx).unwrap_or(d.grid_nx),
        paths: cli.paths.or(cfg.paths).unwrap_or(d.paths),
        seed: cli.seed.or(cfg.seed).unwrap_or(d.seed),
        theta,
        alpha0: cli.alpha0.or(cfg.alpha0).unwrap_or(d.alpha0),
        beta0: cli.beta0.or(cfg.beta0).unwrap_or(d.beta0),
        y0: cfg.y0.unwrap_or(d.y0),
        eta: cfg.eta.unwrap_or(d.eta),
        tol: cli.tol.or(cfg.tol).unwrap_or(d.tol),
    })
}

fn make_grid(p: &Params) -> Result<GridSpec, CliError> {
    GridSpec::new(p.t_horizon, p.x_horizon, p.grid_nt, p.grid_nx).map_err(usage)
}

fn run_experiment(exp: Experiment, p: &Params) -> Result<ExperimentOutput, CliError> {
    match exp {
        Experiment::SheetCheck => sheet_check(p),
        Experiment::Isometry => isometry(p),
        Experiment::Ibp => ibp(p),
        Experiment::Positivity => positivity(p),
        Experiment::Negativity => negativity(p),
        Experiment::Lq => lq_experiment(p),
        Experiment::Harvest => harvest_experiment(p),
        Experiment::Ml => ml_experiment(p),
        Experiment::R0 => r0(p),
        Experiment::Selftest => unreachable!("selftest is dispatched before run_experiment"),
    }
}

fn sheet_check(p: &Params) -> Result<ExperimentOutput, CliError> {
    let grid = make_grid(p)?;
    let paths = sheet_ensemble(grid, SeedSpec::new(p.seed), p.paths);
    // Node pairs as fractions of the horizons: comparable, incomparable,
    // repeated, and near-corner placements, snapped to the nearest node.
    let fractions: [((f64, f64), (f64, f64)); 6] = [
        ((0.25, 0.25), (0.75, 0.75)),
        ((0.5, 1.0), (1.0, 0.5)),
        ((0.25, 0.75), (0.75, 0.25)),
        ((1.0, 1.0), (1.0, 1.0)),
        ((0.5, 0.5), (0.5, 0.5)),
        ((0.125, 0.9375), (0.9375, 0.125)),
    ];
    let (nt, nx) = (grid.n_t() as f64, grid.n_x() as f64);
    let snap = |f: (f64, f64)| {
        grid.node((f.0 * nt).round() as usize, (f.1 * nx).round() as usize)
    };
    let mut rows = Vec::with_capacity(fractions.len());
    for (f1, f2) in fractions {
        rows.push(covariance_row(&paths, snap(f1), snap(f2)).map_err(numeric)?);
    }
    Ok(ExperimentOutput::rows(rows))
}

fn isometry(p: &Params) -> Result<ExperimentOutput, CliError> {
    let grid = make_grid(p)?;
    let check = isometry_check(grid, SeedSpec::new(p.seed), p.paths).map_err(numeric)?;
    let allowance = acceptance::SE_MULTIPLE * check.std_error;
    Ok(ExperimentOutput::rows(vec![
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
    ]))
}

fn ibp(p: &Params) -> Result<ExperimentOutput, CliError> {
    let grid = make_grid(p)?;
    let defect = second_moment_defect(p.alpha0, p.beta0, p.y0, grid, SeedSpec::new(p.seed), p.paths)
        .map_err(numeric)?;
    Ok(ExperimentOutput::rows(vec![ReportRow::against_with_se(
        "paired second-moment defect",
        defect.mean,
        defect.std_error,
        0.0,
        acceptance::SE_MULTIPLE * defect.std_error,
    )]))
}

fn positivity(p: &Params) -> Result<ExperimentOutput, CliError> {
    let probe = positivity_probe(p.eta, p.y0, -4.0, 4.0, 801).map_err(usage)?;
    Ok(ExperimentOutput::rows(vec![
        ReportRow::condition("probe minimum is negative", probe.min_value < 0.0, true),
        ReportRow::informational("probe minimum", probe.min_value, None),
        ReportRow::informational("probe argmin u1", probe.argmin, None),
    ]))
}

fn negativity(p: &Params) -> Result<ExperimentOutput, CliError> {
    let grid = make_grid(p)?;
    let est = negativity_experiment(p.alpha0, p.beta0, p.y0, grid, p.paths, SeedSpec::new(p.seed))
        .map_err(numeric)?;
    let lower = est.fraction - 3.0 * est.std_error;
    Ok(ExperimentOutput::rows(vec![
        ReportRow::condition("negative fraction exceeds three standard errors", lower > 0.0, true),
        ReportRow::informational("negative-path fraction", est.fraction, Some(est.std_error)),
        ReportRow::informational("fraction lower bound (3 se)", lower, None),
    ]))
}

fn lq_experiment(p: &Params) -> Result<ExperimentOutput, CliError> {
    let spec = lq::LqSpec {
        t_horizon: p.t_horizon,
        x_horizon: p.x_horizon,
        theta: p.theta,
        noise: p.beta0,
        y0: p.y0,
    };
    let det_grid = GridSpec::new(p.t_horizon, p.x_horizon, 256, 256).map_err(usage)?;
    let mc_grid = make_grid(p)?;
    let eval =
        lq::evaluate(&spec, det_grid, mc_grid, p.paths, SeedSpec::new(p.seed)).map_err(numeric)?;
    // Interior probe points for the Riccati equation, as horizon fractions.
    let probes = [(0.5, 0.5), (0.2, 0.2), (0.2, 0.8), (0.8, 0.2), (0.8, 0.8)];
    let riccati_sup = probes
        .iter()
        .map(|&(ft, fx)| {
            lq::riccati_residual(
                &spec,
                ft * p.t_horizon,
                fx * p.x_horizon,
                acceptance::RICCATI_STEP,
            )
            .abs()
        })
        .fold(0.0f64, f64::max);
    let rows = vec![
        ReportRow::bounded(
            "order-condition residual",
            eval.condition_residual,
            acceptance::CONDITION_ROOT_TOL,
        ),
        ReportRow::bounded("riccati residual sup", riccati_sup, acceptance::RICCATI_TOL),
        ReportRow::bounded(
            "boundary identity rel err",
            eval.boundary_det_rel_err,
            acceptance::BOUNDARY_DET_REL_TOL,
        ),
        ReportRow::against_with_se(
            "boundary identity sampled defect",
            eval.boundary_mc_diff,
            eval.boundary_mc_se,
            0.0,
            acceptance::SE_MULTIPLE * eval.boundary_mc_se,
        ),
        ReportRow::informational(
            "payoff with gain feedback",
            eval.j_feedback.mean,
            Some(eval.j_feedback.std_error),
        ),
        ReportRow::informational(
            "payoff with negated gain",
            eval.j_negated.mean,
            Some(eval.j_negated.std_error),
        ),
    ];
    let fields = vec![("lambda", lq::lambda_field(&spec, mc_grid))];
    Ok(ExperimentOutput { rows, fields })
}

fn harvest_experiment(p: &Params) -> Result<ExperimentOutput, CliError> {
    let spec = harvest::HarvestSpec {
        t_horizon: p.t_horizon,
        x_horizon: p.x_horizon,
        alpha0: p.alpha0,
        beta0: p.beta0,
        theta: p.theta,
        y0: p.y0,
    };
    spec.validate().map_err(usage)?;
    let grid = make_grid(p)?;
    let sol = harvest::solve(&spec, grid, p.tol, 10_000).map_err(numeric)?;
    let mut rows = vec![
        ReportRow::bounded(
            "hamiltonian stationarity sup",
            sol.dh_du_sup,
            acceptance::HARVEST_STATIONARITY_TOL,
        ),
        ReportRow::informational("adjoint iterations", sol.adjoint.iterations as f64, None),
        ReportRow::informational("adjoint residual", sol.adjoint.residual, None),
    ];
    if p.alpha0 == 0.0 {
        // Without drift feedback the candidate rate is exactly flat.
        let dev = sol.u_star.map(|v| (v - 2.0 / p.theta).abs()).sup_norm();
        rows.push(ReportRow::bounded(
            "flat-rate deviation sup",
            dev,
            acceptance::HARVEST_EXACT_TOL,
        ));
    }
    let fields = vec![
        ("u_star", sol.u_star),
        ("p", sol.adjoint.p),
        ("l", sol.adjoint.l),
        ("state", sol.state),
    ];
    Ok(ExperimentOutput { rows, fields })
}

fn ml_experiment(p: &Params) -> Result<ExperimentOutput, CliError> {
    let spec = ml::MlSpec {
        t_horizon: p.t_horizon,
        x_horizon: p.x_horizon,
        theta: p.theta,
        noise: p.beta0,
        y0: p.y0,
    };
    let grid = make_grid(p)?;
    let cfg = ml::SweepConfig { tol: p.tol, ..ml::SweepConfig::default() };
    if p.beta0 == 0.0 {
        let sol = ml::forward_backward_sweep(&spec, grid, &cfg).map_err(numeric)?;
        let rows = vec![
            ReportRow::condition("sweep converged", sol.converged, true),
            ReportRow::bounded("sweeps used", sol.sweeps as f64, cfg.max_sweeps as f64),
            ReportRow::bounded("final sup update", sol.sup_update, cfg.tol),
            ReportRow::bounded("stationarity residual", sol.residual_stationarity, cfg.tol),
            ReportRow::bounded("adjoint residual", sol.residual_p, cfg.tol),
            ReportRow::bounded("auxiliary residual", sol.residual_l, cfg.tol),
            ReportRow::bounded("forward residual", sol.residual_forward, cfg.tol),
            ReportRow::informational("payoff", sol.j_value, None),
        ];
        let fields = vec![("u", sol.u), ("y", sol.y), ("p", sol.p), ("l", sol.l)];
        Ok(ExperimentOutput { rows, fields })
    } else {
        let demo = ml::pathwise_sweep_demo(&spec, grid, &cfg, p.paths, SeedSpec::new(p.seed))
            .map_err(numeric)?;
        Ok(ExperimentOutput::rows(vec![
            ReportRow::condition("any path converged", demo.n_converged > 0, true),
            ReportRow::informational(
                "payoff mean (converged paths)",
                demo.j.mean,
                Some(demo.j.std_error),
            ),
            ReportRow::informational("mean sweeps per path", demo.mean_sweeps, None),
            ReportRow::informational(
                "converged path fraction",
                demo.n_converged as f64 / demo.n_paths as f64,
                None,
            ),
        ]))
    }
}

fn r0(p: &Params) -> Result<ExperimentOutput, CliError> {
    let root = find_r0(p.tol).map_err(usage)?;
    Ok(ExperimentOutput::rows(vec![ReportRow::against(
        "series root r0",
        root,
        acceptance::R0_TARGET,
        acceptance::R0_TOL,
    )]))
}

fn selftest(params: &Params, out_dir: &Path) -> Result<bool, CliError> {
    let outcomes = acceptance::run_all().map_err(numeric)?;
    let mut rows = Vec::new();
    let mut all_matched = true;
    for outcome in &outcomes {
        println!("{}", outcome.status_line());
        if !outcome.matches_expectation() {
            all_matched = false;
            for r in outcome.report.rows.iter().filter(|r| !r.pass) {
                println!("    FAIL {}: value {:.6e}, tol {:.2e}", r.metric, r.value, r.tolerance);
            }
        }
        for r in &outcome.report.rows {
            // Wall-clock rows gate the terminal verdict but would break
            // byte-identical reruns, so they stay out of the CSV.
            if r.metric.ends_with("runtime (s)") {
                continue;
            }
            let mut row = r.clone();
            row.metric = format!("c{:02} {}", outcome.report.index, row.metric);
            rows.push(row);
        }
    }
    write_artifacts(out_dir, params, &rows, &[])?;
    println!(
        "selftest: {}",
        if all_matched {
            "every criterion matches its shipped status"
        } else {
            "MISMATCH against the shipped status table"
        }
    );
    println!("wrote {}", out_dir.display());
    Ok(all_matched)
}

fn print_report(p: &Params, rows: &[ReportRow]) {
    println!(
        "experiment: {} (T {}, X {}, grid {}x{}, paths {}, seed {})",
        p.experiment, p.t_horizon, p.x_horizon, p.grid_nt, p.grid_nx, p.paths, p.seed
    );
    for r in rows {
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        let mut line = format!("  {verdict}  {}: value {:.6e}", r.metric, r.value);
        if let Some(se) = r.std_error {
            line.push_str(&format!(" (se {se:.2e})"));
        }
        if let Some(target) = r.target {
            line.push_str(&format!(", target {target:.6e}"));
        }
        if r.tolerance.is_finite() {
            line.push_str(&format!(", tol {:.2e}", r.tolerance));
        }
        println!("{line}");
    }
}

fn write_artifacts(
    dir: &Path,
    params: &Params,
    rows: &[ReportRow],
    fields: &[(&'static str, Field2D)],
) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    let write = |name: String, text: String| {
        let path = dir.join(&name);
        fs::write(&path, text)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
    };
    let mut params_json = serde_json::to_string_pretty(params)
        .map_err(|e| CliError::Usage(format!("cannot encode params: {e}")))?;
    params_json.push('\n');
    write("params.json".into(), params_json)?;
    let mut csv = String::from(ReportRow::csv_header());
    csv.push('\n');
    for r in rows {
        csv.push_str(&r.to_csv_line());
        csv.push('\n');
    }
    write("results.csv".into(), csv)?;
    for (name, field) in fields {
        write(format!("field_{name}.csv"), field_csv(field))?;
    }
    Ok(())
}

fn field_csv(field: &Field2D) -> String {
    let grid = field.grid();
    let mut out = String::from("t,x,value\n");
    for i in 0..=grid.n_t() {
        for j in 0..=grid.n_x() {
            let (t, x) = grid.node(i, j);
            out.push_str(&format!("{t:.16e},{x:.16e},{:.16e}\n", field.at(i, j)));
        }
    }
    out
}
