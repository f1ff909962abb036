//! Run configuration: TOML schema, bundled presets and validation.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use pkf_core::filters::DEFAULT_DELTA;
use pkf_core::models::{EpidemiologicalInputs, Variant};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const PRESETS: [(&str, &str); 4] = [
    ("uganda_sir", include_str!("../presets/uganda_sir.toml")),
    ("uganda_sirh", include_str!("../presets/uganda_sirh.toml")),
    ("contagious", include_str!("../presets/contagious.toml")),
    ("contagious_lowrate", include_str!("../presets/contagious_lowrate.toml")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Sir,
    Sirh,
    SirhContagious,
}

impl ModelKind {
    pub fn variant(self) -> Variant {
        match self {
            ModelKind::Sir => Variant::Sir,
            ModelKind::Sirh | ModelKind::SirhContagious => Variant::Sirh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedState {
    Zero,
    /// Noncontagious closed-form equilibrium.
    SteadyState,
    /// Fixed point of the contagious dynamics.
    ContagiousEquilibrium,
}

/// A state given by name or as explicit compartment values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Named(NamedState),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VMode {
    Predicted,
    Fixed,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub name: String,
    pub v_mode: VMode,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_true")]
    pub clamp: bool,
    /// State `x̄` for `V = diag(B x̄)`; fixed mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<StateSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    pub model: ModelKind,
    #[serde(default)]
    pub beta: f64,
    pub c_i: f64,
    #[serde(default)]
    pub c_h: f64,
    pub w_diag: Vec<f64>,
    pub noise_multipliers: Vec<f64>,
    pub n_steps: usize,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    pub seed: u64,
    pub initial: StateSpec,
    #[serde(default = "default_true")]
    pub clamp_truth: bool,
    pub output_dir: PathBuf,
    pub inputs: EpidemiologicalInputs,
    #[serde(default)]
    pub filters: Vec<FilterSpec>,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_true() -> bool {
    true
}

fn default_trials() -> usize {
    1
}

fn default_burn_in() -> usize {
    pkf_core::evaluate::DEFAULT_BURN_IN
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub trials: Option<usize>,
    pub steps: Option<usize>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn preset(name: &str) -> Result<Self, CliError> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let names: Vec<_> = PRESETS.iter().map(|(n, _)| *n).collect();
            config_err(format!("unknown preset '{name}' (available: {})", names.join(", ")))
        })?;
        Self::from_toml(text)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn apply(mut self, o: &Overrides) -> Result<Self, CliError> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(trials) = o.trials {
            self.n_trials = trials;
        }
        if let Some(steps) = o.steps {
            self.n_steps = steps;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn variant(&self) -> Variant {
        self.model.variant()
    }

    /// Burn-in actually applied: at most half the run.
    pub fn effective_burn_in(&self) -> usize {
        self.burn_in.min(self.n_steps / 2)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let dim = self.variant().dim();
        self.inputs
            .validate(self.variant())
            .map_err(|e| config_err(e.to_string()))?;
        let finite_nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(config_err(format!("{name} must be finite and nonnegative, got {v}")))
            }
        };
        finite_nonneg("beta", self.beta)?;
        finite_nonneg("c_i", self.c_i)?;
        finite_nonneg("c_h", self.c_h)?;
        if self.beta != 0.0 && self.model != ModelKind::SirhContagious {
            return Err(config_err("beta is only meaningful for model = \"sirh_contagious\""));
        }
        if self.w_diag.len() != dim {
            return Err(config_err(format!("w_diag needs {dim} entries, got {}", self.w_diag.len())));
        }
        for &w in &self.w_diag {
            finite_nonneg("w_diag entry", w)?;
        }
        if self.noise_multipliers.is_empty() {
            return Err(config_err("noise_multipliers must not be empty"));
        }
        for &m in &self.noise_multipliers {
            finite_nonneg("noise multiplier", m)?;
        }
        if self.n_trials == 0 {
            return Err(config_err("n_trials must be at least 1"));
        }
        self.check_state("initial", &self.initial)?;

        let mut names = HashSet::new();
        for f in &self.filters {
            if f.name.is_empty()
                || !f.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(config_err(format!(
                    "filter name '{}' must be nonempty and use only [A-Za-z0-9_-]",
                    f.name
                )));
            }
            if !names.insert(f.name.as_str()) {
                return Err(config_err(format!("duplicate filter name '{}'", f.name)));
            }
            if !(f.delta > 0.0 && f.delta.is_finite()) {
                return Err(config_err(format!("filter '{}': delta must be positive", f.name)));
            }
            match (&f.v_mode, &f.reference) {
                (VMode::Fixed, None) => {
                    return Err(config_err(format!("filter '{}': fixed mode needs a reference state", f.name)))
                }
                (VMode::Fixed, Some(r)) => self.check_state(&format!("filter '{}' reference", f.name), r)?,
                (_, Some(_)) => {
                    return Err(config_err(format!("filter '{}': reference is only used in fixed mode", f.name)))
                }
                (_, None) => {}
            }
        }
        Ok(())
    }

    fn check_state(&self, what: &str, s: &StateSpec) -> Result<(), CliError> {
        let dim = self.variant().dim();
        match s {
            StateSpec::Values(v) if v.len() != dim => {
                Err(config_err(format!("{what} needs {dim} values, got {}", v.len())))
            }
            StateSpec::Values(v) if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) => {
                Err(config_err(format!("{what} values must be finite and nonnegative")))
            }
            StateSpec::Named(NamedState::ContagiousEquilibrium) if self.model != ModelKind::SirhContagious => {
                Err(config_err(format!("{what}: contagious_equilibrium needs model = \"sirh_contagious\"")))
            }
            _ => Ok(()),
        }
    }
}
