use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::{Episode, Origin, TransitionDataset};
use crate::env::{Env, EnvId, ExpertController};
use crate::error::{Error, Result};
use crate::math::{discounted_returns_of, extended_step_limit, StepLimitSpec};
use crate::nn::ResidualActor;
use crate::par::{self, Exec};
use crate::seed::{self, Stream};

/// Step accounting of one collection call, read from the environments'
/// own step counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CollectStats {
    pub episodes: usize,
    /// Environment `step` invocations made.
    pub env_steps: u64,
    /// Steps requested.
    pub requested: u64,
    /// `env_steps - requested`: the last episode always runs to completion.
    pub overshoot: u64,
}

/// Plays one episode from the reset state for `reset_seed`. The first
/// `retained` steps become rows; returns are computed over the whole trace.
fn run_episode(
    env: &mut dyn Env,
    reset_seed: u64,
    step_limit: usize,
    retained: usize,
    gamma: f64,
    mut policy: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Episode> {
    let mut obs = env.reset(reset_seed);
    let mut observations = Vec::new();
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let terminated = loop {
        let action = policy(&obs)?;
        let step = env.step(&action, step_limit)?;
        if rewards.len() < retained {
            observations.extend_from_slice(&obs);
            actions.extend_from_slice(&action);
        }
        rewards.push(step.reward);
        if step.done() {
            break step.terminated;
        }
        obs = step.next_obs;
    };
    let mut returns = discounted_returns_of(&rewards, gamma)?;
    returns.truncate(retained);
    Ok(Episode { observations, actions, rewards, returns, terminated })
}

/// Runs episodes `0, 1, 2, ...` until their steps sum to at least `target`.
///
/// Episodes are launched in waves of `ceil(remaining / max_len)`: every
/// episode of a wave is provably needed, so the result (and the step count)
/// equals that of a strictly sequential loop.
fn collect_waves(
    exec: Exec,
    target: u64,
    max_len: usize,
    episode: impl Fn(u64) -> Result<(Episode, u64)> + Sync + Send,
) -> Result<(Vec<Episode>, CollectStats)> {
    let mut episodes = Vec::new();
    let mut stats = CollectStats { requested: target, ..CollectStats::default() };
    let mut collected = 0u64;
    while collected < target {
        let wave = (target - collected).div_ceil(max_len as u64) as usize;
        let first = episodes.len() as u64;
        let results = par::map_indices(exec, wave, |k| episode(first + k as u64));
        for r in results {
            let (ep, steps) = r?;
            if ep.trace_len() as u64 != steps {
                return Err(Error::InvalidParameter(format!(
                    "episode length {} disagrees with the environment counter {steps}",
                    ep.trace_len()
                )));
            }
            if collected < target {
                collected += steps;
                stats.env_steps += steps;
                episodes.push(ep);
            }
        }
    }
    stats.episodes = episodes.len();
    stats.overshoot = stats.env_steps - target;
    Ok((episodes, stats))
}

/// Runs the expert for whole episodes at the nominal horizon until at least
/// `n_exp` steps have been taken. Episode `i` starts from the reset state
/// for `derive(seed, ExpertEpisode, i)`; the expert's perturbation stream is
/// reseeded per episode, so the dataset does not depend on scheduling.
pub fn collect_expert(
    env: EnvId,
    controller: &ExpertController,
    n_exp: u64,
    gamma: f64,
    seed: u64,
    exec: Exec,
) -> Result<(TransitionDataset, CollectStats)> {
    if n_exp == 0 {
        return Err(Error::InvalidParameter("n_exp must be at least 1".into()));
    }
    if controller.env() != env {
        return Err(Error::InvalidParameter(format!("expert for {} used on {env}", controller.env())));
    }
    let horizon = env.spec().nominal_horizon;
    let (episodes, stats) = collect_waves(exec, n_exp, horizon, |i| {
        let mut e = env.make();
        let mut c = controller.clone();
        c.reseed(seed::derive(seed, Stream::ExpertNoise, i));
        let ep =
            run_episode(e.as_mut(), seed::derive(seed, Stream::ExpertEpisode, i), horizon, horizon, gamma, |obs| {
                Ok(c.act(obs))
            })?;
        Ok((ep, e.total_steps()))
    })?;
    let mut ds = TransitionDataset::empty(env, Origin::Expert, gamma, 0.0, horizon);
    ds.episodes = episodes;
    Ok((ds, stats))
}

/// Step limit used for critic-target rollouts.
pub fn rollout_step_limit(env: EnvId, gamma: f64, tau: f64) -> Result<usize> {
    let spec = env.spec();
    if !spec.supports_extension {
        return Ok(spec.nominal_horizon);
    }
    extended_step_limit(StepLimitSpec { nominal_horizon: spec.nominal_horizon, r_max: spec.r_max, tau }, gamma)
}

/// Rolls out the actor until at least `n_rol` steps have been taken.
///
/// Episodes run to termination or the extended step limit (the nominal
/// horizon for environments without extension). Only the first `T` steps of
/// each episode are kept as rows, with returns computed over the full trace.
/// Actions are sampled from the Gaussian policy unless `deterministic`.
#[allow(clippy::too_many_arguments)]
pub fn collect_rollouts(
    env: EnvId,
    actor: &ResidualActor,
    n_rol: u64,
    gamma: f64,
    tau: f64,
    deterministic: bool,
    seed: u64,
    exec: Exec,
) -> Result<(TransitionDataset, CollectStats)> {
    let spec = env.spec();
    if actor.obs_dim() != spec.obs_dim || actor.act_dim() != spec.act_dim {
        return Err(Error::DimensionMismatch {
            what: "actor for rollouts",
            expected: spec.obs_dim,
            got: actor.obs_dim(),
        });
    }
    let limit_tau = if spec.supports_extension { tau } else { 0.0 };
    let step_limit = rollout_step_limit(env, gamma, tau)?;
    let horizon = spec.nominal_horizon;
    let (episodes, stats) = collect_waves(exec, n_rol, step_limit, |i| {
        let mut e = env.make();
        let mut noise = seed::rng(seed, Stream::RolloutNoise, i);
        let sigma: Vec<f64> = actor.log_sigma.iter().map(|ls| ls.exp()).collect();
        let ep = run_episode(
            e.as_mut(),
            seed::derive(seed, Stream::RolloutEpisode, i),
            step_limit,
            horizon,
            gamma,
            |obs| {
                let mut a = actor.mean(obs)?;
                if !deterministic {
                    for (ai, s) in a.iter_mut().zip(&sigma) {
                        *ai += s * noise.sample::<f64, _>(StandardNormal);
                    }
                }
                Ok(a)
            },
        )?;
        Ok((ep, e.total_steps()))
    })?;
    let mut ds = TransitionDataset::empty(env, Origin::Rollout, gamma, limit_tau, step_limit);
    ds.episodes = episodes;
    Ok((ds, stats))
}
