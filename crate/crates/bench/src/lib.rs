//! Shared fixtures for the benchmarks.

use pkf_core::models::{
    build_linear_sirh, derive_rates, observation_matrix, steady_state_closed_form,
    EpidemiologicalInputs, LinearModel, NonlinearModel, Variant,
};
use pkf_core::{DMatrix, DVector};

const BIRTHS: f64 = 4562.0;

/// Linear SIRH with base system noise and standard reporting rates, and its equilibrium.
pub fn sirh() -> (LinearModel, DVector<f64>) {
    let r = derive_rates(&EpidemiologicalInputs::uganda_sirh(), Variant::Sirh).expect("valid inputs");
    let model = build_linear_sirh(&r, BIRTHS)
        .and_then(|m| m.with_noise(DMatrix::from_diagonal(&DVector::from_vec(vec![144.0, 1.0, 1.0, 10.0])) * 1e7))
        .and_then(|m| m.with_observation(observation_matrix(0.2 / 28.0, 0.6 / 337.0, Variant::Sirh)?))
        .expect("valid model");
    let x0 = steady_state_closed_form(&r, BIRTHS, Variant::Sirh).expect("stable").values;
    (model, x0)
}

/// Contagious SIRH with `beta = 1e-6`.
pub fn contagious() -> (NonlinearModel, DVector<f64>) {
    let (linear, x0) = sirh();
    (NonlinearModel::new(linear, 1e-6).expect("beta >= 0"), x0)
}
