//! Turns a [`RunConfig`] into models, states and filter variants.

use pkf_core::evaluate::FilterVariant;
use pkf_core::filters::{FilterConfig, NoiseMode};
use pkf_core::models::{
    build_linear_sir, build_linear_sirh, derive_rates, observation_matrix, steady_state_closed_form,
    DerivedRates, Dynamics, FixedPointOptions, LinearModel, NonlinearModel, Variant,
};
use pkf_core::simulate::{run_scenario, Scenario, Trajectory};
use pkf_core::{DMatrix, DVector};

use crate::config::{ModelKind, NamedState, RunConfig, StateSpec, VMode};
use crate::error::{invalid_model, CliError};

/// Either model family behind one [`Dynamics`] implementation.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Contagious(NonlinearModel),
}

impl Dynamics for Model {
    fn dim(&self) -> usize {
        match self {
            Model::Linear(m) => m.dim(),
            Model::Contagious(m) => m.dim(),
        }
    }

    fn propagate(&self, x: &DVector<f64>, control: Option<&DVector<f64>>, k: usize) -> DVector<f64> {
        match self {
            Model::Linear(m) => m.propagate(x, control, k),
            Model::Contagious(m) => m.propagate(x, control, k),
        }
    }

    fn jacobian(&self, x: &DVector<f64>, k: usize) -> DMatrix<f64> {
        match self {
            Model::Linear(m) => m.jacobian(x, k),
            Model::Contagious(m) => m.jacobian(x, k),
        }
    }

    fn noise_cov(&self) -> &DMatrix<f64> {
        match self {
            Model::Linear(m) => m.noise_cov(),
            Model::Contagious(m) => m.noise_cov(),
        }
    }

    fn observation(&self, k: usize) -> &DMatrix<f64> {
        match self {
            Model::Linear(m) => m.observation(k),
            Model::Contagious(m) => m.observation(k),
        }
    }

    fn with_noise_scale(&self, factor: f64) -> Self {
        match self {
            Model::Linear(m) => Model::Linear(m.with_noise_scale(factor)),
            Model::Contagious(m) => Model::Contagious(m.with_noise_scale(factor)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub rates: DerivedRates,
    pub model: Model,
    /// Noncontagious closed-form equilibrium.
    pub steady_state: DVector<f64>,
    /// Contagious fixed point, for contagious models.
    pub equilibrium: Option<DVector<f64>>,
    pub initial: DVector<f64>,
    pub filters: Vec<FilterVariant>,
}

impl Experiment {
    pub fn new(config: RunConfig) -> Result<Self, CliError> {
        config.validate()?;
        let variant = config.variant();
        let b = config.inputs.births_per_day;
        let rates = derive_rates(&config.inputs, variant).map_err(invalid_model)?;
        let linear = match variant {
            Variant::Sir => build_linear_sir(&rates, b),
            Variant::Sirh => build_linear_sirh(&rates, b),
        }
        .and_then(|m| m.with_noise(DMatrix::from_diagonal(&DVector::from_column_slice(&config.w_diag))))
        .and_then(|m| m.with_observation(observation_matrix(config.c_i, config.c_h, variant)?))
        .map_err(invalid_model)?;
        let steady_state = steady_state_closed_form(&rates, b, variant).map_err(invalid_model)?.values;

        let (model, equilibrium) = match config.model {
            ModelKind::Sir | ModelKind::Sirh => (Model::Linear(linear), None),
            ModelKind::SirhContagious => {
                let m = NonlinearModel::new(linear, config.beta).map_err(invalid_model)?;
                let eq = m.equilibrium(&steady_state, FixedPointOptions::default())?.values;
                (Model::Contagious(m), Some(eq))
            }
        };

        let mut exp = Self {
            config,
            rates,
            model,
            steady_state,
            equilibrium,
            initial: DVector::zeros(0),
            filters: Vec::new(),
        };
        exp.initial = exp.resolve(&exp.config.initial.clone());
        exp.filters = exp
            .config
            .filters
            .iter()
            .map(|f| {
                let noise = match f.v_mode {
                    VMode::Predicted => NoiseMode::Predicted,
                    VMode::Oracle => NoiseMode::Oracle,
                    VMode::Fixed => {
                        let reference = exp.resolve(f.reference.as_ref().expect("validated"));
                        NoiseMode::Fixed(DMatrix::from_diagonal(&(exp.model.observation(0) * reference)))
                    }
                };
                FilterVariant::new(
                    f.name.clone(),
                    FilterConfig {
                        delta: f.delta,
                        noise,
                        clamp_state: f.clamp,
                    },
                )
            })
            .collect();
        Ok(exp)
    }

    fn resolve(&self, spec: &StateSpec) -> DVector<f64> {
        match spec {
            StateSpec::Values(v) => DVector::from_column_slice(v),
            StateSpec::Named(NamedState::Zero) => DVector::zeros(self.model.dim()),
            StateSpec::Named(NamedState::SteadyState) => self.steady_state.clone(),
            StateSpec::Named(NamedState::ContagiousEquilibrium) => {
                self.equilibrium.clone().expect("validated: contagious model")
            }
        }
    }

    pub fn labels(&self) -> &'static [&'static str] {
        self.config.variant().labels()
    }

    pub fn observed_labels(&self) -> &'static [&'static str] {
        match self.config.variant() {
            Variant::Sir => &["I"],
            Variant::Sirh => &["I", "H"],
        }
    }

    /// Observation row reporting state component `c`, if any.
    pub fn observation_row(&self, c: usize) -> Option<usize> {
        let labels = self.labels();
        self.observed_labels().iter().position(|l| *l == labels[c])
    }

    pub fn scenario(&self, multiplier: f64, stream: u64) -> Scenario {
        Scenario {
            initial: self.initial.clone(),
            n_steps: self.config.n_steps,
            noise_multiplier: multiplier,
            seed: self.config.seed,
            stream,
            clamp_truth: self.config.clamp_truth,
            label: format!("{} m={multiplier} stream={stream}", self.config.scenario),
        }
    }

    /// Stream `stream` at the first noise multiplier.
    pub fn simulate(&self, stream: u64) -> Result<Trajectory, CliError> {
        let m = self.config.noise_multipliers[0];
        Ok(run_scenario(&self.model, &self.scenario(m, stream))?)
    }

    /// The model with `W` scaled by the first noise multiplier.
    pub fn scaled_model(&self) -> Model {
        self.model.with_noise_scale(self.config.noise_multipliers[0])
    }
}
