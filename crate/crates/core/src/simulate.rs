//! Ground-truth trajectories and Poisson observations.
//!
//! The truth evolves as `x_k = max(0, f(x_{k−1}) + w_{k−1})` with
//! `w ~ N(0, m·W)` for a noise multiplier `m`, and each step reports
//! `y_k ~ Poisson(B_k x_k)` componentwise. All randomness comes from a
//! ChaCha stream selected by `(seed, stream)`, so trials of a benchmark get
//! independent, reproducible streams.

mod poisson;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use poisson::{sample_poisson, INVERSION_LIMIT};

use crate::error::{Error, Result};
use crate::filters::Observation;
use crate::linalg::is_diagonal;
use crate::models::Dynamics;

/// Random stream `stream` of the generator family seeded by `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Factor `L` with `L Lᵀ = W`, used to draw `w = L z` from standard normals.
#[derive(Debug, Clone)]
pub struct NoiseFactor {
    factor: DMatrix<f64>,
    zero: bool,
}

impl NoiseFactor {
    /// Square root of the diagonal for diagonal `W`, otherwise Cholesky, with
    /// a symmetric eigendecomposition for PSD but singular `W`.
    pub fn new(w: &DMatrix<f64>) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::Dimension("noise covariance must be square".into()));
        }
        let n = w.nrows();
        let factor = if is_diagonal(w) {
            if w.diagonal().iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(Error::NotPositiveSemidefinite);
            }
            DMatrix::from_diagonal(&w.diagonal().map(f64::sqrt))
        } else if let Some(chol) = w.clone().cholesky() {
            chol.l()
        } else {
            let eig = w.clone().symmetric_eigen();
            let tol = 1e-9 * w.trace().abs().max(f64::MIN_POSITIVE);
            if eig.eigenvalues.iter().any(|v| *v < -tol) {
                return Err(Error::NotPositiveSemidefinite);
            }
            let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            &eig.eigenvectors * DMatrix::from_diagonal(&roots)
        };
        let zero = factor.iter().all(|v| *v == 0.0);
        debug_assert_eq!(factor.nrows(), n);
        Ok(Self { factor, zero })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.factor.nrows();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        if self.zero {
            return DVector::zeros(n);
        }
        &self.factor * z
    }
}

/// One truth step `x_{k−1} → x_k`.
pub fn step_truth<D: Dynamics, R: Rng + ?Sized>(
    x: &DVector<f64>,
    model: &D,
    control: Option<&DVector<f64>>,
    noise: &NoiseFactor,
    k: usize,
    clamp: bool,
    rng: &mut R,
) -> DVector<f64> {
    let mut next = model.propagate(x, control, k) + noise.sample(rng);
    if clamp {
        next.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    next
}

/// Independent Poisson counts with the given rates.
pub fn sample_observation<R: Rng + ?Sized>(rates: &DVector<f64>, step: usize, rng: &mut R) -> Result<Observation> {
    let counts = rates
        .iter()
        .map(|&l| sample_poisson(l, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Observation::new(counts, step))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub initial: DVector<f64>,
    pub n_steps: usize,
    /// Multiplies the model's `W` for the truth noise.
    pub noise_multiplier: f64,
    pub seed: u64,
    pub stream: u64,
    /// `max(0, ·)` on the truth; disabling it can produce negative rates.
    pub clamp_truth: bool,
    pub label: String,
}

impl Scenario {
    pub fn new(initial: DVector<f64>, n_steps: usize, seed: u64) -> Self {
        Self {
            initial,
            n_steps,
            noise_multiplier: 1.0,
            seed,
            stream: 0,
            clamp_truth: true,
            label: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x_0 … x_n`.
    pub truth: Vec<DVector<f64>>,
    /// `y_0 … y_n`.
    pub observations: Vec<Observation>,
    /// `B_k x_k`.
    pub rates: Vec<DVector<f64>>,
    pub seed: u64,
    pub stream: u64,
    pub label: String,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.truth.len().saturating_sub(1)
    }

    /// Hash of the truth and observation data, for checking that several
    /// filters consumed the same trajectory.
    pub fn data_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for x in &self.truth {
            x.iter().for_each(|v| v.to_bits().hash(&mut h));
        }
        self.observations.hash(&mut h);
        h.finish()
    }

    /// CSV with one row per step: `step`, the state components, the rates
    /// `lambda_*` and counts `y_*` for each observed component.
    pub fn write_csv<W: Write>(&self, out: W, state_labels: &[&str], observed_labels: &[&str]) -> Result<()> {
        let n = self.truth.first().map_or(0, |x| x.len());
        let m = self.rates.first().map_or(0, |r| r.len());
        if state_labels.len() != n || observed_labels.len() != m {
            return Err(Error::Dimension("CSV labels do not match trajectory dimensions".into()));
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string()];
        header.extend(state_labels.iter().map(|s| s.to_string()));
        header.extend(observed_labels.iter().map(|s| format!("lambda_{s}")));
        header.extend(observed_labels.iter().map(|s| format!("y_{s}")));
        w.write_record(&header).map_err(io_err)?;
        for ((x, rate), obs) in self.truth.iter().zip(&self.rates).zip(&self.observations) {
            let mut row = vec![obs.step.to_string()];
            row.extend(x.iter().map(|v| fmt_f64(*v)));
            row.extend(rate.iter().map(|v| fmt_f64(*v)));
            row.extend(obs.counts.iter().map(|c| c.to_string()));
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("write failed: {e}")))?;
        Ok(())
    }
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("write failed: {e}"))
}

/// Generates truth and observations jointly, step by step. At each step the
/// noise draw precedes the Poisson draws.
pub fn run_scenario<D: Dynamics>(model: &D, scenario: &Scenario) -> Result<Trajectory> {
    let n = model.dim();
    if scenario.initial.len() != n {
        return Err(Error::Dimension(format!("initial state must have length {n}")));
    }
    if !(scenario.noise_multiplier >= 0.0 && scenario.noise_multiplier.is_finite()) {
        return Err(Error::InvalidInput("noise multiplier must be nonnegative".into()));
    }
    if scenario.initial.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidInput("initial state must be finite and nonnegative".into()));
    }
    let noise = NoiseFactor::new(&(model.noise_cov() * scenario.noise_multiplier))?;
    let mut rng = rng_for(scenario.seed, scenario.stream);

    let mut truth = Vec::with_capacity(scenario.n_steps + 1);
    let mut observations = Vec::with_capacity(scenario.n_steps + 1);
    let mut rates = Vec::with_capacity(scenario.n_steps + 1);
    let mut x = scenario.initial.clone();
    for k in 0..=scenario.n_steps {
        if k > 0 {
            x = step_truth(&x, model, None, &noise, k, scenario.clamp_truth, &mut rng);
        }
        let rate = model.observation(k) * &x;
        let obs = sample_observation(&rate, k, &mut rng).map_err(|e| e.at_step(k))?;
        truth.push(x.clone());
        rates.push(rate);
        observations.push(obs);
    }
    Ok(Trajectory {
        truth,
        observations,
        rates,
        seed: scenario.seed,
        stream: scenario.stream,
        label: scenario.label.clone(),
    })
}
