//! Exact Poisson variates.
//!
//! Sequential-search inversion for small rates and Hörmann's transformed
//! rejection with squeeze (PTRS) above [`INVERSION_LIMIT`].

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub const INVERSION_LIMIT: f64 = 10.0;

/// Draws one Poisson(`lambda`) variate. `lambda = 0` yields 0.
pub fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<u64> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::NegativeRate(lambda));
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidInput("Poisson rate must be finite".into()));
    }
    if lambda == 0.0 {
        Ok(0)
    } else if lambda < INVERSION_LIMIT {
        Ok(inversion(lambda, rng))
    } else {
        Ok(ptrs(lambda, rng))
    }
}

fn inversion<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    // the cdf can stall just below 1 in floating point; the tail mass past
    // the cutoff is far below 1e-300 for λ < 10
    while u > cdf && k < 200 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

fn ptrs<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    let log_lambda = lambda.ln();
    let b = 0.931 + 2.53 * lambda.sqrt();
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * log_lambda - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}
