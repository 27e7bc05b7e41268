//! Returns, advantages, value targets and the extended step limit.
//!
//! All routines are pure functions over slices. Returns and GAE are computed
//! with a single backward pass.

use crate::error::{Error, Result};

/// Per-step rewards of one episode together with how it ended.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTrace {
    rewards: Vec<f64>,
    terminated: bool,
}

impl RewardTrace {
    pub fn new(rewards: Vec<f64>, terminated: bool) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::Empty("reward trace"));
        }
        check_finite_rewards(&rewards)?;
        Ok(Self { rewards, terminated })
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// True if a terminal state was reached, false if the episode was truncated.
    pub fn terminated(&self) -> bool {
        self.terminated
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

fn check_finite_rewards(rewards: &[f64]) -> Result<()> {
    match rewards.iter().position(|r| !r.is_finite()) {
        Some(index) => Err(Error::NonFiniteReward { index }),
        None => Ok(()),
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("gamma must lie in (0, 1], got {gamma}")))
    }
}

/// Discount factor and GAE decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountSpec {
    pub gamma: f64,
    pub lambda: f64,
}

impl DiscountSpec {
    pub fn new(gamma: f64, lambda: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        Ok(Self { gamma, lambda })
    }
}

/// Inputs of the extended step limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLimitSpec {
    pub nominal_horizon: usize,
    pub r_max: f64,
    pub tau: f64,
}

impl StepLimitSpec {
    /// Geometric bound on the discarded tail when episodes are cut `extra`
    /// steps after the nominal horizon.
    pub fn tail_bound(&self, gamma: f64, extra: usize) -> f64 {
        self.r_max * gamma.powi(extra as i32) / (1.0 - gamma)
    }
}

/// `G_t = r_{t+1} + gamma * G_{t+1}` over the trace, with `G_T = 0`.
pub fn discounted_returns(trace: &RewardTrace, gamma: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    Ok(returns_unchecked(trace.rewards(), gamma))
}

/// Same as [`discounted_returns`] for a raw reward slice.
pub fn discounted_returns_of(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::Empty("reward trace"));
    }
    check_finite_rewards(rewards)?;
    check_gamma(gamma)?;
    Ok(returns_unchecked(rewards, gamma))
}

fn returns_unchecked(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    out
}

/// Generalized advantage estimates for one episode segment.
///
/// `values[t]` is `v_old(s_t)`. The value after the last step is taken as
/// zero when `terminated`, otherwise as `bootstrap_value`.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    bootstrap_value: f64,
    terminated: bool,
    spec: DiscountSpec,
) -> Result<Vec<f64>> {
    if rewards.len() != values.len() {
        return Err(Error::LengthMismatch { what: "gae rewards/values", left: rewards.len(), right: values.len() });
    }
    let DiscountSpec { gamma, lambda } = spec;
    let mut out = vec![0.0; rewards.len()];
    let mut next_value = if terminated { 0.0 } else { bootstrap_value };
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        acc = delta + gamma * lambda * acc;
        out[t] = acc;
        next_value = values[t];
    }
    Ok(out)
}

/// `V_t^tar = A_t + v_old(s_t)`.
pub fn value_targets(advantages: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    if advantages.len() != values.len() {
        return Err(Error::LengthMismatch { what: "value targets", left: advantages.len(), right: values.len() });
    }
    Ok(advantages.iter().zip(values).map(|(a, v)| a + v).collect())
}

/// Smallest horizon `T_ext >= T` whose discarded tail
/// `r_max * gamma^(T_ext - T) / (1 - gamma)` is at most `tau`.
///
/// Evaluates `ceil(T + ln(tau (1 - gamma) / r_max) / ln(gamma))` and then
/// nudges the result by at most a step so that the tail bound and minimality
/// hold exactly in floating point.
pub fn extended_step_limit(spec: StepLimitSpec, gamma: f64) -> Result<usize> {
    if gamma == 1.0 {
        return Err(Error::UndiscountedStepLimit);
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if spec.nominal_horizon == 0 {
        return Err(Error::InvalidParameter("nominal horizon must be positive".into()));
    }
    if !(spec.r_max > 0.0 && spec.r_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("r_max must be positive, got {}", spec.r_max)));
    }
    if !(spec.tau > 0.0 && spec.tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {}", spec.tau)));
    }
    let bound = spec.r_max / (1.0 - gamma);
    if spec.tau > bound {
        return Err(Error::ToleranceTooLarge { tau: spec.tau, bound });
    }
    let raw = (spec.tau * (1.0 - gamma) / spec.r_max).ln() / gamma.ln();
    let mut extra = raw.max(0.0).ceil() as usize;
    while spec.tail_bound(gamma, extra) > spec.tau {
        extra += 1;
    }
    while extra > 0 && spec.tail_bound(gamma, extra - 1) <= spec.tau {
        extra -= 1;
    }
    Ok(spec.nominal_horizon + extra)
}

/// Shifts to zero mean and scales to unit (population) standard deviation.
/// The divisor is floored at `1e-8`, so constant input maps to zeros.
pub fn normalize_advantages(advantages: &[f64]) -> Result<Vec<f64>> {
    if advantages.is_empty() {
        return Err(Error::Empty("advantages"));
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let scale = var.sqrt().max(1e-8);
    Ok(advantages.iter().map(|a| (a - mean) / scale).collect())
}
