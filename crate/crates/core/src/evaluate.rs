//! Filter-quality metrics and noise-sweep benchmarks.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::{run_filter, FilterConfig, FilterEstimate, Observation};
use crate::models::{DerivedRates, Dynamics, H, I};
use crate::simulate::{fmt_f64, run_scenario, Scenario, Trajectory};

/// Steps excluded from RMSE and coverage by default.
pub const DEFAULT_BURN_IN: usize = 1000;

fn check_aligned(estimates: &[FilterEstimate], truth: &[DVector<f64>]) -> Result<()> {
    if estimates.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} estimates for {} truth states",
            estimates.len(),
            truth.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::InvalidInput("no estimates to evaluate".into()));
    }
    Ok(())
}

/// Root mean squared error of one state component.
pub fn rmse(estimates: &[FilterEstimate], truth: &[DVector<f64>], component: usize) -> Result<f64> {
    check_aligned(estimates, truth)?;
    let sum: f64 = estimates
        .iter()
        .zip(truth)
        .map(|(e, x)| (e.state[component] - x[component]).powi(2))
        .sum();
    Ok((sum / estimates.len() as f64).sqrt())
}

/// Per-component fraction of steps with `|x − x̂| ≤ 2√P_ii`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub fractions: Vec<f64>,
    pub n_steps: usize,
}

pub fn coverage_2sigma(estimates: &[FilterEstimate], truth: &[DVector<f64>]) -> Result<CoverageReport> {
    check_aligned(estimates, truth)?;
    let n = truth[0].len();
    let mut inside = vec![0usize; n];
    for (e, x) in estimates.iter().zip(truth) {
        let sd = e.std_devs();
        for (i, hit) in inside.iter_mut().enumerate() {
            if (x[i] - e.state[i]).abs() <= 2.0 * sd[i] {
                *hit += 1;
            }
        }
    }
    let total = estimates.len();
    Ok(CoverageReport {
        fractions: inside.iter().map(|&c| c as f64 / total as f64).collect(),
        n_steps: total,
    })
}

/// Fraction of observations with a zero count, per observed component.
pub fn zero_observation_fraction(observations: &[Observation]) -> Vec<f64> {
    let Some(first) = observations.first() else {
        return Vec::new();
    };
    let mut zeros = vec![0usize; first.counts.len()];
    for obs in observations {
        for (z, &c) in zeros.iter_mut().zip(&obs.counts) {
            if c == 0 {
                *z += 1;
            }
        }
    }
    zeros
        .into_iter()
        .map(|z| z as f64 / observations.len() as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnualDeaths {
    pub sepsis: f64,
    pub hydrocephalus: f64,
}

/// Deaths over the last 365 steps of a truth trajectory: `Σ d_I·I_k` and,
/// for SIRH states, `Σ d_H·H_k`.
pub fn annual_deaths(truth: &[DVector<f64>], rates: &DerivedRates) -> Result<AnnualDeaths> {
    if truth.len() < 365 {
        return Err(Error::InvalidInput("need at least 365 steps".into()));
    }
    let year = &truth[truth.len() - 365..];
    let sepsis = year.iter().map(|x| rates.d_i * x[I]).sum();
    let hydrocephalus = year
        .iter()
        .map(|x| if x.len() > H { rates.d_h * x[H] } else { 0.0 })
        .sum();
    Ok(AnnualDeaths { sepsis, hydrocephalus })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterVariant {
    pub name: String,
    pub config: FilterConfig,
}

impl FilterVariant {
    pub fn new(name: impl Into<String>, config: FilterConfig) -> Self {
        Self {
            name: name.into(),
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub multipliers: Vec<f64>,
    pub n_steps: usize,
    pub n_trials: usize,
    pub seed: u64,
    pub burn_in: usize,
    /// Truth and filters both start here; `P₀⁺ = 10⁴·I`.
    pub initial: DVector<f64>,
    pub clamp_truth: bool,
}

/// Metrics for one filter on one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub filter: String,
    pub multiplier: f64,
    pub trial: usize,
    /// [`Trajectory::data_hash`] of the data this filter consumed.
    pub data_hash: u64,
    pub rmse: Vec<f64>,
    pub coverage: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseRow {
    pub filter: String,
    pub multiplier: f64,
    pub component: usize,
    pub mean: f64,
    /// Standard error of `mean` across trials (0 for a single trial).
    pub std_error: f64,
    pub per_trial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseTable {
    pub rows: Vec<RmseRow>,
    pub labels: Vec<String>,
    pub n_steps: usize,
    pub n_trials: usize,
    pub burn_in: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub filter: String,
    pub multiplier: f64,
    pub component: usize,
    /// Mean over trials.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rmse: RmseTable,
    pub coverage: Vec<CoverageRow>,
    pub trials: Vec<TrialRecord>,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl RmseTable {
    pub fn get(&self, filter: &str, multiplier: f64, component: usize) -> Option<&RmseRow> {
        self.rows
            .iter()
            .find(|r| r.filter == filter && r.multiplier == multiplier && r.component == component)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header = ["filter", "noise_multiplier", "component", "rmse", "std_error", "n_trials", "n_steps", "burn_in", "seed"];
        w.write_record(header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.filter.clone(),
                fmt_f64(r.multiplier),
                self.labels[r.component].clone(),
                fmt_f64(r.mean),
                fmt_f64(r.std_error),
                self.n_trials.to_string(),
                self.n_steps.to_string(),
                self.burn_in.to_string(),
                self.seed.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("write failed: {e}")))
    }

    /// One whitespace-separated block per (filter, component), blank-line
    /// separated, with a `#` comment header: `multiplier rmse std_error`.
    pub fn write_gnuplot<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| Error::InvalidInput(format!("write failed: {e}"));
        let mut keys: Vec<(&str, usize)> = Vec::new();
        for r in &self.rows {
            if !keys.contains(&(r.filter.as_str(), r.component)) {
                keys.push((r.filter.as_str(), r.component));
            }
        }
        for (filter, component) in keys {
            writeln!(out, "# {filter} {}", self.labels[component]).map_err(io)?;
            for r in self.rows.iter().filter(|r| r.filter == filter && r.component == component) {
                writeln!(out, "{} {} {}", fmt_f64(r.multiplier), fmt_f64(r.mean), fmt_f64(r.std_error)).map_err(io)?;
            }
            writeln!(out, "\n").map_err(io)?;
        }
        Ok(())
    }
}

pub fn write_coverage_csv<W: Write>(rows: &[CoverageRow], labels: &[String], n_steps: usize, n_trials: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["filter", "noise_multiplier", "component", "coverage", "n_trials", "n_steps"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.filter.clone(),
            fmt_f64(r.multiplier),
            labels[r.component].clone(),
            fmt_f64(r.coverage),
            n_trials.to_string(),
            n_steps.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::InvalidInput(format!("write failed: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("write failed: {e}"))
}

/// One filter variant run over a trajectory.
#[derive(Debug, Clone)]
pub struct VariantRun {
    pub variant: FilterVariant,
    /// [`Trajectory::data_hash`] of the input, to confirm variants shared data.
    pub data_hash: u64,
    /// Estimates for steps `0..=n`.
    pub estimates: Vec<FilterEstimate>,
    /// Per-component RMSE after burn-in.
    pub rmse: Vec<f64>,
    pub coverage: CoverageReport,
}

/// Runs every variant on `trajectory` and scores the steps after `burn_in`.
pub fn evaluate_trajectory<D: Dynamics>(
    model: &D,
    trajectory: &Trajectory,
    variants: &[FilterVariant],
    burn_in: usize,
) -> Result<Vec<VariantRun>> {
    let n = trajectory.n_steps();
    if burn_in >= n {
        return Err(Error::InvalidInput(format!("burn-in {burn_in} leaves no steps out of {n}")));
    }
    let initial = FilterEstimate::initial(trajectory.truth[0].clone());
    variants
        .iter()
        .map(|v| {
            let data_hash = trajectory.data_hash();
            let est = run_filter(
                model,
                initial.clone(),
                &trajectory.observations[1..],
                &v.config,
                Some(&trajectory.truth[1..]),
            )?;
            let scored = &est[burn_in + 1..];
            let truth = &trajectory.truth[burn_in + 1..];
            let rmse = (0..model.dim())
                .map(|c| rmse(scored, truth, c))
                .collect::<Result<Vec<_>>>()?;
            let coverage = coverage_2sigma(scored, truth)?;
            Ok(VariantRun {
                variant: v.clone(),
                data_hash,
                estimates: est,
                rmse,
                coverage,
            })
        })
        .collect()
}

/// RMSE (and coverage) of each filter variant across noise multipliers.
///
/// For every multiplier and trial one trajectory is simulated from stream
/// `multiplier_index · n_trials + trial` of `seed`, and all variants run on
/// that same trajectory with `W` scaled by the multiplier. Trials run in
/// parallel; results are ordered by (multiplier, trial, variant).
pub fn noise_sweep<D: Dynamics + Sync>(
    model: &D,
    variants: &[FilterVariant],
    spec: &SweepSpec,
    labels: &[&str],
) -> Result<SweepResult> {
    if spec.multipliers.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(Error::InvalidInput("noise multipliers must be nonnegative".into()));
    }
    if spec.n_trials == 0 || variants.is_empty() {
        return Err(Error::InvalidInput("a sweep needs at least one trial and one filter".into()));
    }
    if labels.len() != model.dim() {
        return Err(Error::Dimension("one label per state component is required".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..spec.multipliers.len())
        .flat_map(|mi| (0..spec.n_trials).map(move |t| (mi, t)))
        .collect();

    let per_job: Vec<Vec<TrialRecord>> = jobs
        .par_iter()
        .map(|&(mi, trial)| {
            let multiplier = spec.multipliers[mi];
            let scaled = model.with_noise_scale(multiplier);
            let scenario = Scenario {
                initial: spec.initial.clone(),
                n_steps: spec.n_steps,
                noise_multiplier: 1.0,
                seed: spec.seed,
                stream: (mi * spec.n_trials + trial) as u64,
                clamp_truth: spec.clamp_truth,
                label: format!("m={multiplier} trial={trial}"),
            };
            let traj = run_scenario(&scaled, &scenario)?;
            let results = evaluate_trajectory(&scaled, &traj, variants, spec.burn_in)?;
            Ok(results
                .into_iter()
                .map(|r| TrialRecord {
                    filter: r.variant.name,
                    multiplier,
                    trial,
                    data_hash: r.data_hash,
                    rmse: r.rmse,
                    coverage: r.coverage.fractions,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let trials: Vec<TrialRecord> = per_job.into_iter().flatten().collect();

    let mut rows = Vec::new();
    let mut coverage = Vec::new();
    for &multiplier in &spec.multipliers {
        for v in variants {
            let records: Vec<&TrialRecord> = trials
                .iter()
                .filter(|r| r.filter == v.name && r.multiplier == multiplier)
                .collect();
            for component in 0..model.dim() {
                let per_trial: Vec<f64> = records.iter().map(|r| r.rmse[component]).collect();
                let (mean, std_error) = mean_and_se(&per_trial);
                rows.push(RmseRow {
                    filter: v.name.clone(),
                    multiplier,
                    component,
                    mean,
                    std_error,
                    per_trial,
                });
                let cov: Vec<f64> = records.iter().map(|r| r.coverage[component]).collect();
                coverage.push(CoverageRow {
                    filter: v.name.clone(),
                    multiplier,
                    component,
                    coverage: mean_and_se(&cov).0,
                });
            }
        }
    }
    Ok(SweepResult {
        rmse: RmseTable {
            rows,
            labels: labels.iter().map(|s| s.to_string()).collect(),
            n_steps: spec.n_steps,
            n_trials: spec.n_trials,
            burn_in: spec.burn_in,
            seed: spec.seed,
        },
        coverage,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn estimates(states: &[f64], var: f64) -> Vec<FilterEstimate> {
        states
            .iter()
            .map(|&s| FilterEstimate::new(DVector::from_element(1, s), DMatrix::from_element(1, 1, var), 0).unwrap())
            .collect()
    }

    fn truth(states: &[f64]) -> Vec<DVector<f64>> {
        states.iter().map(|&s| DVector::from_element(1, s)).collect()
    }

    #[test]
    fn rmse_of_exact_estimates_is_zero() {
        let xs = [1.0, 5.0, 9.0];
        assert_eq!(rmse(&estimates(&xs, 1.0), &truth(&xs), 0).unwrap(), 0.0);
    }

    #[test]
    fn rmse_of_constant_offset() {
        let xs = [1.0, 5.0, 9.0, 2.5];
        let shifted: Vec<f64> = xs.iter().map(|x| x + 3.0).collect();
        assert_eq!(rmse(&estimates(&shifted, 1.0), &truth(&xs), 0).unwrap(), 3.0);
    }

    #[test]
    fn rmse_length_mismatch() {
        assert!(rmse(&estimates(&[1.0], 1.0), &truth(&[1.0, 2.0]), 0).is_err());
    }

    #[test]
    fn coverage_of_exact_estimates_is_one() {
        let xs = [1.0, 5.0, 9.0];
        let c = coverage_2sigma(&estimates(&xs, 0.5), &truth(&xs)).unwrap();
        assert_eq!(c.fractions, vec![1.0]);
    }

    #[test]
    fn coverage_counts_two_sigma_band() {
        // sd = 1: errors 0.5, 2.0 (on the boundary), 2.5
        let c = coverage_2sigma(&estimates(&[0.5, 2.0, 2.5, 0.0], 1.0), &truth(&[0.0; 4])).unwrap();
        assert_eq!(c.fractions, vec![0.75]);
    }

    #[test]
    fn zero_fraction() {
        let obs = vec![Observation::new(vec![0, 3], 0), Observation::new(vec![0, 0], 1)];
        assert_eq!(zero_observation_fraction(&obs), vec![1.0, 0.5]);
        assert!(zero_observation_fraction(&[]).is_empty());
    }

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_se(&[7.0]), (7.0, 0.0));
    }
}
