//! Subcommand implementations. Each prints a human-readable summary to `w`,
//! writes its CSV files under the configured output directory and returns
//! the computed values.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pkf_core::evaluate::{
    annual_deaths, evaluate_trajectory, noise_sweep, write_coverage_csv,
    zero_observation_fraction, AnnualDeaths, SweepResult, SweepSpec,
};
use pkf_core::filters::FilterEstimate;
use pkf_core::models::{steady_state_numeric, DerivedRates, H, R};
use pkf_core::simulate::{fmt_f64, Trajectory};
use pkf_core::DVector;

use crate::error::CliError;
use crate::experiment::{Experiment, Model};

/// `v` rounded to 6 significant digits, without exponent for everyday magnitudes.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-5..=9).contains(&mag) {
        return format!("{v:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).map_err(CliError::io(&path))?))
}

fn csv_writer(dir: &Path, name: &str) -> Result<(csv::Writer<BufWriter<File>>, PathBuf), CliError> {
    Ok((csv::Writer::from_writer(create(dir, name)?), dir.join(name)))
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn write_failed(path: PathBuf) -> impl FnOnce(pkf_core::Error) -> CliError {
    move |e| CliError::Io {
        path,
        source: std::io::Error::other(e.to_string()),
    }
}

fn say(w: &mut dyn Write, text: std::fmt::Arguments) -> Result<(), CliError> {
    w.write_fmt(text)
        .and_then(|_| w.write_all(b"\n"))
        .map_err(CliError::io("<stdout>"))
}

macro_rules! out {
    ($w:expr, $($arg:tt)*) => { say($w, format_args!($($arg)*)) };
}

pub fn derive_params(exp: &Experiment, w: &mut dyn Write) -> Result<DerivedRates, CliError> {
    let dir = &exp.config.output_dir;
    let (mut csv, path) = csv_writer(dir, "derived_rates.csv")?;
    csv.write_record(["name", "value"]).map_err(csv_io(&path))?;
    out!(w, "derived daily rates ({})", exp.config.scenario)?;
    for (name, v) in exp.rates.named() {
        out!(w, "  {name:<10} {}", sig6(v))?;
        csv.write_record([name, &fmt_f64(v)]).map_err(csv_io(&path))?;
    }
    csv.flush().map_err(CliError::io(&path))?;
    Ok(exp.rates.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateReport {
    pub closed_form: DVector<f64>,
    pub numeric: DVector<f64>,
    pub max_relative_difference: f64,
    pub contagious: Option<DVector<f64>>,
    /// `365·h·R_∞`, SIRH only.
    pub annual_pih_incidence: Option<f64>,
    pub annual_sepsis_deaths: f64,
    /// `365·d_H·H_∞`, SIRH only.
    pub annual_pih_deaths: Option<f64>,
}

fn relative_difference(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn steady_state(exp: &Experiment, w: &mut dyn Write) -> Result<SteadyStateReport, CliError> {
    let linear = match &exp.model {
        Model::Linear(m) => m,
        Model::Contagious(m) => m.linear(),
    };
    let closed = exp.steady_state.clone();
    let numeric = steady_state_numeric(linear)?.values;
    let max_rel = closed
        .iter()
        .zip(numeric.iter())
        .map(|(a, b)| relative_difference(*a, *b))
        .fold(0.0, f64::max);
    let sirh = closed.len() > H;
    let report = SteadyStateReport {
        annual_pih_incidence: sirh.then(|| 365.0 * exp.rates.h * closed[R]),
        annual_sepsis_deaths: 365.0 * exp.rates.d_i * closed[pkf_core::models::I],
        annual_pih_deaths: sirh.then(|| 365.0 * exp.rates.d_h * closed[H]),
        contagious: exp.equilibrium.clone(),
        max_relative_difference: max_rel,
        numeric,
        closed_form: closed,
    };

    let dir = &exp.config.output_dir;
    let (mut csv, path) = csv_writer(dir, "steady_state.csv")?;
    let mut header = vec!["component", "closed_form", "numeric"];
    if report.contagious.is_some() {
        header.push("contagious_equilibrium");
    }
    csv.write_record(&header).map_err(csv_io(&path))?;
    out!(w, "steady state ({})", exp.config.scenario)?;
    out!(w, "  {:<4} {:>18} {:>18} {:>10}", "", "closed form", "numeric", "rounded")?;
    for (i, label) in exp.labels().iter().enumerate() {
        let (c, n) = (report.closed_form[i], report.numeric[i]);
        out!(w, "  {label:<4} {c:>18.6} {n:>18.6} {:>10}", c.round())?;
        let mut row = vec![label.to_string(), fmt_f64(c), fmt_f64(n)];
        if let Some(eq) = &report.contagious {
            row.push(fmt_f64(eq[i]));
        }
        csv.write_record(&row).map_err(csv_io(&path))?;
    }
    csv.flush().map_err(CliError::io(&path))?;
    out!(w, "  max relative difference: {:.3e}", report.max_relative_difference)?;
    if let Some(eq) = &report.contagious {
        let values: Vec<String> = eq.iter().map(|v| sig6(*v)).collect();
        out!(w, "  contagious equilibrium (beta = {}): {}", exp.config.beta, values.join(", "))?;
    }
    out!(w, "  annual sepsis deaths at equilibrium: {}", sig6(report.annual_sepsis_deaths))?;
    if let (Some(inc), Some(deaths)) = (report.annual_pih_incidence, report.annual_pih_deaths) {
        out!(w, "  annual PIH incidence at equilibrium: {}", sig6(inc))?;
        out!(w, "  annual PIH deaths at equilibrium: {}", sig6(deaths))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateReport {
    pub trajectory: Trajectory,
    pub zero_fractions: Vec<f64>,
    /// Zero-count fractions averaged over `n_trials` independent streams.
    pub mean_zero_fractions: Vec<f64>,
}

fn write_trajectory(exp: &Experiment, traj: &Trajectory) -> Result<(), CliError> {
    let dir = &exp.config.output_dir;
    let file = create(dir, "trajectory.csv")?;
    traj.write_csv(file, exp.labels(), exp.observed_labels())
        .map_err(write_failed(dir.join("trajectory.csv")))
}

pub fn simulate(exp: &Experiment, w: &mut dyn Write) -> Result<SimulateReport, CliError> {
    let trajectory = exp.simulate(0)?;
    write_trajectory(exp, &trajectory)?;
    let zero_fractions = zero_observation_fraction(&trajectory.observations[1..]);
    let mut sums = vec![0.0; zero_fractions.len()];
    for stream in 0..exp.config.n_trials as u64 {
        let t = if stream == 0 { trajectory.clone() } else { exp.simulate(stream)? };
        for (s, f) in sums.iter_mut().zip(zero_observation_fraction(&t.observations[1..])) {
            *s += f;
        }
    }
    let mean_zero_fractions: Vec<f64> = sums.iter().map(|s| s / exp.config.n_trials as f64).collect();

    out!(w, "simulated {} steps ({}, seed {})", exp.config.n_steps, exp.config.scenario, exp.config.seed)?;
    let last = trajectory.truth.last().expect("initial state");
    for (label, v) in exp.labels().iter().zip(last.iter()) {
        out!(w, "  final {label:<2} {}", sig6(*v))?;
    }
    for (i, label) in exp.observed_labels().iter().enumerate() {
        out!(
            w,
            "  zero-count fraction y_{label}: {:.4} (mean over {} streams: {:.4})",
            zero_fractions.get(i).copied().unwrap_or(f64::NAN),
            exp.config.n_trials,
            mean_zero_fractions.get(i).copied().unwrap_or(f64::NAN)
        )?;
    }
    Ok(SimulateReport {
        trajectory,
        zero_fractions,
        mean_zero_fractions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub name: String,
    pub estimates: Vec<FilterEstimate>,
    /// Per component, over steps after burn-in.
    pub rmse: Vec<f64>,
    pub coverage: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub trajectory: Trajectory,
    pub runs: Vec<FilterRun>,
    /// Over the final 365 days of the truth, when the run is that long.
    pub annual_deaths: Option<AnnualDeaths>,
}

fn write_estimates(exp: &Experiment, traj: &Trajectory, run: &FilterRun) -> Result<(), CliError> {
    let dir = &exp.config.output_dir;
    let (mut csv, path) = csv_writer(dir, &format!("estimates_{}.csv", run.name))?;
    csv.write_record(["step", "component", "truth", "estimate", "p_diag", "observation"])
        .map_err(csv_io(&path))?;
    let labels = exp.labels();
    for (k, est) in run.estimates.iter().enumerate().skip(1) {
        for (c, label) in labels.iter().enumerate() {
            let obs = exp
                .observation_row(c)
                .map(|row| traj.observations[k].counts[row].to_string())
                .unwrap_or_default();
            csv.write_record([
                est.step.to_string(),
                label.to_string(),
                fmt_f64(traj.truth[k][c]),
                fmt_f64(est.state[c]),
                fmt_f64(est.covariance[(c, c)]),
                obs,
            ])
            .map_err(csv_io(&path))?;
        }
    }
    csv.flush().map_err(CliError::io(&path))
}

pub fn filter(exp: &Experiment, w: &mut dyn Write) -> Result<FilterReport, CliError> {
    if exp.filters.is_empty() {
        return Err(CliError::Config("no filters configured".into()));
    }
    if exp.config.n_steps == 0 {
        return Err(CliError::Config("n_steps must be positive to run a filter".into()));
    }
    let trajectory = exp.simulate(0)?;
    write_trajectory(exp, &trajectory)?;
    let model = exp.scaled_model();
    let burn_in = exp.config.effective_burn_in();
    let runs: Vec<FilterRun> = evaluate_trajectory(&model, &trajectory, &exp.filters, burn_in)?
        .into_iter()
        .map(|r| FilterRun {
            name: r.variant.name,
            estimates: r.estimates,
            rmse: r.rmse,
            coverage: r.coverage.fractions,
        })
        .collect();
    for run in &runs {
        write_estimates(exp, &trajectory, run)?;
    }
    let annual_deaths = (trajectory.truth.len() >= 365)
        .then(|| annual_deaths(&trajectory.truth, &exp.rates))
        .transpose()?;

    out!(
        w,
        "filtered {} steps ({}, seed {}, noise multiplier {}, burn-in {burn_in})",
        exp.config.n_steps,
        exp.config.scenario,
        exp.config.seed,
        exp.config.noise_multipliers[0]
    )?;
    let labels = exp.labels();
    out!(w, "  {:<10} {:<4} {:>14} {:>10}", "filter", "", "rmse", "coverage")?;
    for run in &runs {
        for (c, label) in labels.iter().enumerate() {
            out!(w, "  {:<10} {label:<4} {:>14} {:>10.4}", run.name, sig6(run.rmse[c]), run.coverage[c])?;
        }
    }
    if let Some(d) = &annual_deaths {
        out!(w, "  deaths over the final year of the truth: sepsis {}", sig6(d.sepsis))?;
        if exp.labels().len() > H {
            out!(w, "  deaths over the final year of the truth: PIH {}", sig6(d.hydrocephalus))?;
        }
    }
    Ok(FilterReport {
        trajectory,
        runs,
        annual_deaths,
    })
}

pub fn benchmark(exp: &Experiment, w: &mut dyn Write) -> Result<SweepResult, CliError> {
    if exp.filters.is_empty() {
        return Err(CliError::Config("no filters configured".into()));
    }
    let cfg = &exp.config;
    let burn_in = cfg.effective_burn_in();
    if cfg.n_steps <= burn_in {
        return Err(CliError::Config("n_steps must exceed the burn-in".into()));
    }
    let spec = SweepSpec {
        multipliers: cfg.noise_multipliers.clone(),
        n_steps: cfg.n_steps,
        n_trials: cfg.n_trials,
        seed: cfg.seed,
        burn_in,
        initial: exp.initial.clone(),
        clamp_truth: cfg.clamp_truth,
    };
    let result = noise_sweep(&exp.model, &exp.filters, &spec, exp.labels())?;

    let dir = &cfg.output_dir;
    result
        .rmse
        .write_csv(create(dir, "rmse.csv")?)
        .map_err(write_failed(dir.join("rmse.csv")))?;
    let labels: Vec<String> = exp.labels().iter().map(|s| s.to_string()).collect();
    write_coverage_csv(&result.coverage, &labels, cfg.n_steps, cfg.n_trials, create(dir, "coverage.csv")?)
        .map_err(write_failed(dir.join("coverage.csv")))?;
    result
        .rmse
        .write_gnuplot(create(dir, "rmse.dat")?)
        .map_err(write_failed(dir.join("rmse.dat")))?;

    out!(
        w,
        "noise sweep ({}, {} steps, {} trials, burn-in {burn_in}, seed {})",
        cfg.scenario,
        cfg.n_steps,
        cfg.n_trials,
        cfg.seed
    )?;
    out!(w, "  {:<10} {:>6} {:<4} {:>14} {:>12} {:>10}", "filter", "W x", "", "rmse", "std err", "coverage")?;
    for (row, cov) in result.rmse.rows.iter().zip(&result.coverage) {
        out!(
            w,
            "  {:<10} {:>6} {:<4} {:>14} {:>12} {:>10.4}",
            row.filter,
            row.multiplier,
            labels[row.component],
            sig6(row.mean),
            sig6(row.std_error),
            cov.coverage
        )?;
    }
    Ok(result)
}
