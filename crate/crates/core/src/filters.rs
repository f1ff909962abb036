//! Forecast and assimilation steps.
//!
//! Every filter here shares the Kalman structure
//!
//! ```text
//! x⁻ = f(x⁺)                      P⁻ = F P⁺ Fᵀ + W
//! K  = P⁻Bᵀ (B P⁻ Bᵀ + V)⁻¹
//! x⁺ = max(0, x⁻ + K (y − B x⁻))   P⁺ = (I − KB) P⁻ (I − KB)ᵀ + K V Kᵀ
//! ```
//!
//! and differs only in how the observation covariance `V` is chosen
//! ([`NoiseMode`]). With Poisson counts `y ~ Poisson(Bx)`, the count variance
//! equals the rate, so the PKF sets `V = diag(max(δ, B x⁻))`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::models::Dynamics;

/// Default initial covariance scale, `P₀⁺ = 10⁴·I`.
pub const DEFAULT_INITIAL_VARIANCE: f64 = 1e4;

/// Default floor on the diagonal of `V`.
pub const DEFAULT_DELTA: f64 = 0.1;

/// Poisson counts observed at one time step.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    pub counts: Vec<u64>,
    pub step: usize,
}

impl Observation {
    pub fn new(counts: Vec<u64>, step: usize) -> Self {
        Self { counts, step }
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.counts.len(), self.counts.iter().map(|&c| c as f64))
    }
}

/// Mean and covariance of the state estimate at `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterEstimate {
    pub state: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub step: usize,
    /// Gain used by the assimilation that produced this estimate.
    pub gain: Option<DMatrix<f64>>,
    /// `y − B x⁻` of that assimilation.
    pub innovation: Option<DVector<f64>>,
}

impl FilterEstimate {
    pub fn new(state: DVector<f64>, covariance: DMatrix<f64>, step: usize) -> Result<Self> {
        let n = state.len();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::Dimension(format!("covariance must be {n}x{n}")));
        }
        Ok(Self {
            state,
            covariance,
            step,
            gain: None,
            innovation: None,
        })
    }

    /// Estimate at step 0 with `P₀⁺ = 10⁴·I`.
    pub fn initial(state: DVector<f64>) -> Self {
        let n = state.len();
        Self {
            state,
            covariance: DMatrix::identity(n, n) * DEFAULT_INITIAL_VARIANCE,
            step: 0,
            gain: None,
            innovation: None,
        }
    }

    /// `√P_ii` for each component.
    pub fn std_devs(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

/// How the observation covariance `V_k` is formed.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseMode {
    /// `diag(max(δ, B x̂⁻))`: the Poisson Kalman filter.
    Predicted,
    /// A constant matrix: the standard Kalman filter baseline.
    Fixed(DMatrix<f64>),
    /// `diag(max(δ, B x))` from the true state, which is not available in practice.
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub delta: f64,
    pub noise: NoiseMode,
    /// Apply `max(0, ·)` to forecast and posterior means.
    pub clamp_state: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self::pkf()
    }
}

impl FilterConfig {
    pub fn pkf() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            noise: NoiseMode::Predicted,
            clamp_state: true,
        }
    }

    pub fn oracle() -> Self {
        Self {
            noise: NoiseMode::Oracle,
            ..Self::pkf()
        }
    }

    pub fn fixed(v: DMatrix<f64>) -> Self {
        Self {
            noise: NoiseMode::Fixed(v),
            ..Self::pkf()
        }
    }

    /// Fixed `V = diag(B x̄)` for a reference state `x̄`.
    pub fn fixed_at(b: &DMatrix<f64>, reference: &DVector<f64>) -> Self {
        Self::fixed(DMatrix::from_diagonal(&(b * reference)))
    }

    pub fn without_clamping(mut self) -> Self {
        self.clamp_state = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidInput(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }
}

fn clamp_nonnegative(x: &mut DVector<f64>) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Prior for step `est.step + 1`: the mean goes through the model map, the
/// covariance through its Jacobian at the current mean.
///
/// For a [`LinearModel`](crate::models::LinearModel) this is the Kalman
/// forecast; for a [`NonlinearModel`](crate::models::NonlinearModel) it is
/// the extended-filter forecast.
pub fn forecast<D: Dynamics>(
    est: &FilterEstimate,
    model: &D,
    control: Option<&DVector<f64>>,
    cfg: &FilterConfig,
) -> Result<FilterEstimate> {
    let n = model.dim();
    if est.state.len() != n || est.covariance.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "estimate has dimension {}, model has {n}",
            est.state.len()
        )));
    }
    let k = est.step + 1;
    let mut state = model.propagate(&est.state, control, k);
    if cfg.clamp_state {
        clamp_nonnegative(&mut state);
    }
    let jac = model.jacobian(&est.state, k);
    let mut covariance = &jac * &est.covariance * jac.transpose() + model.noise_cov();
    symmetrize(&mut covariance);
    Ok(FilterEstimate {
        state,
        covariance,
        step: k,
        gain: None,
        innovation: None,
    })
}

/// Observation covariance for an assimilation from `state`.
pub fn observation_covariance(
    b: &DMatrix<f64>,
    state: &DVector<f64>,
    cfg: &FilterConfig,
    truth: Option<&DVector<f64>>,
) -> Result<DMatrix<f64>> {
    let floored = |x: &DVector<f64>| DMatrix::from_diagonal(&(b * x).map(|r| r.max(cfg.delta)));
    match &cfg.noise {
        NoiseMode::Predicted => Ok(floored(state)),
        NoiseMode::Oracle => truth
            .map(floored)
            .ok_or_else(|| Error::InvalidInput("oracle mode requires the true state".into())),
        NoiseMode::Fixed(v) => {
            if v.shape() != (b.nrows(), b.nrows()) {
                return Err(Error::Dimension(format!("fixed V must be {0}x{0}", b.nrows())));
            }
            Ok(v.clone())
        }
    }
}

/// Kalman assimilation of `y` with gain from `V`, Joseph-form covariance.
fn assimilate(
    prior: &FilterEstimate,
    y: &DVector<f64>,
    b: &DMatrix<f64>,
    v: &DMatrix<f64>,
    clamp: bool,
) -> Result<FilterEstimate> {
    let n = prior.state.len();
    if b.ncols() != n || b.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "observation matrix is {}x{}, expected {}x{n}",
            b.nrows(),
            b.ncols(),
            y.len()
        )));
    }
    let p = &prior.covariance;
    let bp = b * p;
    let mut innovation_cov = &bp * b.transpose() + v;
    symmetrize(&mut innovation_cov);
    let chol = innovation_cov.cholesky().ok_or(Error::NotPositiveDefinite)?;
    // K = P Bᵀ S⁻¹, i.e. Kᵀ = S⁻¹ (B P) for symmetric P and S
    let gain = chol.solve(&bp).transpose();

    let innovation = y - b * &prior.state;
    let mut state = &prior.state + &gain * &innovation;
    if clamp {
        clamp_nonnegative(&mut state);
    }
    let i_kb = DMatrix::identity(n, n) - &gain * b;
    let mut covariance = &i_kb * p * i_kb.transpose() + &gain * v * gain.transpose();
    symmetrize(&mut covariance);
    Ok(FilterEstimate {
        state,
        covariance,
        step: prior.step,
        gain: Some(gain),
        innovation: Some(innovation),
    })
}

/// Assimilation step shared by the PKF, the EPKF and the fixed-noise baselines.
///
/// `truth` is the true state at the prior's step and is only read in
/// [`NoiseMode::Oracle`].
pub fn pkf_update(
    prior: &FilterEstimate,
    obs: &Observation,
    b: &DMatrix<f64>,
    cfg: &FilterConfig,
    truth: Option<&DVector<f64>>,
) -> Result<FilterEstimate> {
    if obs.counts.len() != b.nrows() {
        return Err(Error::Dimension(format!(
            "{} counts for {} observed rates",
            obs.counts.len(),
            b.nrows()
        )));
    }
    let v = observation_covariance(b, &prior.state, cfg, truth)?;
    assimilate(prior, &obs.as_vector(), b, &v, cfg.clamp_state)
}

/// Recursive weighted least squares estimate of a static state from one more
/// Poisson observation. `V` is formed from the previous estimate.
pub fn wls_estimate(
    prev: &FilterEstimate,
    obs: &Observation,
    b: &DMatrix<f64>,
    cfg: &FilterConfig,
) -> Result<FilterEstimate> {
    if cfg.noise == NoiseMode::Oracle {
        return Err(Error::InvalidInput("the WLS estimator has no oracle mode".into()));
    }
    let mut est = pkf_update(prev, obs, b, cfg, None)?;
    est.step = prev.step + 1;
    Ok(est)
}

/// Forecasts and assimilates each observation in turn.
///
/// `observations[i]` must be for step `initial.step + i + 1`; `truth[i]` is the
/// true state at that step. The returned sequence starts with `initial`.
pub fn run_filter<D: Dynamics>(
    model: &D,
    initial: FilterEstimate,
    observations: &[Observation],
    cfg: &FilterConfig,
    truth: Option<&[DVector<f64>]>,
) -> Result<Vec<FilterEstimate>> {
    cfg.validate()?;
    if let Some(t) = truth {
        if t.len() != observations.len() {
            return Err(Error::Dimension(format!(
                "{} truth states for {} observations",
                t.len(),
                observations.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(observations.len() + 1);
    out.push(initial);
    for (i, obs) in observations.iter().enumerate() {
        let prev = out.last().expect("initial estimate");
        let step = prev.step + 1;
        let post = (|| {
            if obs.step != step {
                return Err(Error::InvalidInput(format!(
                    "observation for step {} where step {step} was expected",
                    obs.step
                )));
            }
            let prior = forecast(prev, model, None, cfg)?;
            pkf_update(&prior, obs, model.observation(step), cfg, truth.map(|t| &t[i]))
        })()
        .map_err(|e| e.at_step(step))?;
        out.push(post);
    }
    Ok(out)
}
