//! Poisson Kalman filtering.
//!
//! A Kalman-structured filter whose observation noise covariance is set from
//! the predicted Poisson rates, the extended (Jacobian) variant for nonlinear
//! dynamics, and the compartmental SIR/SIRH models used to exercise them:
//!
//! * [`models`]: epidemiological inputs, derived daily rates, linear SIR/SIRH
//!   and contagious SIRH dynamics, steady states.
//! * [`filters`]: forecast/assimilation steps (PKF, fixed-noise KF, oracle),
//!   the recursive weighted least squares estimator, and trajectory drivers.
//! * [`simulate`]: seeded ground-truth trajectories and Poisson observations.
//! * [`evaluate`]: RMSE, 2σ coverage, zero-count fractions and noise sweeps.

pub mod error;
pub mod evaluate;
pub mod filters;
mod linalg;
pub mod models;
pub mod simulate;

pub use error::{Error, Result};
pub use evaluate::{CoverageReport, RmseTable};
pub use filters::{FilterConfig, FilterEstimate, NoiseMode, Observation};
pub use models::{
    DerivedRates, Dynamics, EpidemiologicalInputs, LinearModel, NonlinearModel, SteadyState,
    Variant,
};
pub use simulate::{Scenario, Trajectory};

pub use nalgebra::{DMatrix, DVector};
