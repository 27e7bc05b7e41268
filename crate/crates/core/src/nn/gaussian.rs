//! Diagonal Gaussian action distribution.

use std::f64::consts::{E, PI};

use crate::error::{Error, Result};

fn check(mean: &[f64], log_sigma: &[f64], action: &[f64]) -> Result<()> {
    if mean.len() != log_sigma.len() || mean.len() != action.len() {
        return Err(Error::DimensionMismatch {
            what: "gaussian log-prob",
            expected: mean.len(),
            got: if log_sigma.len() != mean.len() { log_sigma.len() } else { action.len() },
        });
    }
    if mean.iter().chain(log_sigma).chain(action).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("gaussian log-prob inputs".into()));
    }
    Ok(())
}

/// `sum_i [-0.5 ln(2 pi) - log_sigma_i - 0.5 ((a_i - mu_i) / sigma_i)^2]`.
pub fn log_prob(mean: &[f64], log_sigma: &[f64], action: &[f64]) -> Result<f64> {
    check(mean, log_sigma, action)?;
    Ok(log_prob_unchecked(mean, log_sigma, action))
}

pub(crate) fn log_prob_unchecked(mean: &[f64], log_sigma: &[f64], action: &[f64]) -> f64 {
    let half_ln_2pi = 0.5 * (2.0 * PI).ln();
    mean.iter()
        .zip(log_sigma)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -half_ln_2pi - ls - 0.5 * z * z
        })
        .sum()
}

/// Gradient of [`log_prob`] with respect to the mean and to `log_sigma`.
pub fn log_prob_grad(mean: &[f64], log_sigma: &[f64], action: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut d_mean = Vec::with_capacity(mean.len());
    let mut d_log_sigma = Vec::with_capacity(mean.len());
    for ((m, ls), a) in mean.iter().zip(log_sigma).zip(action) {
        let inv_var = (-2.0 * ls).exp();
        let diff = a - m;
        d_mean.push(diff * inv_var);
        d_log_sigma.push(diff * diff * inv_var - 1.0);
    }
    (d_mean, d_log_sigma)
}

/// `sum_i [0.5 ln(2 pi e) + log_sigma_i]`. Its gradient is one per dimension.
pub fn entropy(log_sigma: &[f64]) -> f64 {
    let c = 0.5 * (2.0 * PI * E).ln();
    log_sigma.iter().map(|ls| c + ls).sum()
}
