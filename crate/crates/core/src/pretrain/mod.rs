//! Actor pretraining by behavioral cloning and critic pretraining on
//! returns of rollouts of the cloned actor.

mod collect;
pub mod dataset;
mod train;

use serde::{Deserialize, Serialize};

use crate::env::{EnvId, ExpertController};
use crate::error::{Error, Result};
use crate::metrics::RunMetrics;
use crate::nn::{ArchConfig, ResidualActor, ValueNet};
use crate::par::Exec;
use crate::seed::{self, Stream};

pub use collect::{collect_expert, collect_rollouts, rollout_step_limit, CollectStats};
pub use dataset::{Episode, Origin, RowSet, TransitionDataset};
pub use train::{
    bc_loss_and_grad, bc_objective, bc_pretrain, critic_loss_and_grad, critic_objective, critic_pretrain, split_rows,
    LossCurve, GRAD_CHUNK,
};

/// Pretraining hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub bc_learning_rate: f64,
    pub bc_epochs: usize,
    pub bc_batch_size: usize,
    pub critic_learning_rate: f64,
    pub critic_epochs: usize,
    pub critic_batch_size: usize,
    /// Discount of the critic targets; must match fine-tuning.
    pub gamma: f64,
    /// Tolerance of the extended step limit; `None` uses 1% of `|G_tar|`.
    pub step_limit_tau: Option<f64>,
    pub validation_fraction: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            bc_learning_rate: 1e-3,
            bc_epochs: 50,
            bc_batch_size: 64,
            critic_learning_rate: 1e-3,
            critic_epochs: 50,
            critic_batch_size: 64,
            gamma: 0.99,
            step_limit_tau: None,
            validation_fraction: 0.1,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("pretrain.{name} must be positive, got {v}")))
            }
        };
        positive("bc_learning_rate", self.bc_learning_rate)?;
        positive("critic_learning_rate", self.critic_learning_rate)?;
        for (name, v) in [
            ("bc_epochs", self.bc_epochs),
            ("bc_batch_size", self.bc_batch_size),
            ("critic_epochs", self.critic_epochs),
            ("critic_batch_size", self.critic_batch_size),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("pretrain.{name} must be positive")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("pretrain.gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if let Some(tau) = self.step_limit_tau {
            positive("step_limit_tau", tau)?;
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "pretrain.validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }

    pub fn tau_for(&self, env: EnvId) -> f64 {
        self.step_limit_tau.unwrap_or_else(|| env.spec().default_tau())
    }
}

/// Fresh actor for run `seed`.
pub fn init_actor(env: EnvId, arch: &ArchConfig, seed: u64) -> Result<ResidualActor> {
    let spec = env.spec();
    ResidualActor::new(spec.obs_dim, spec.act_dim, arch, &mut seed::rng(seed, Stream::ActorInit, 0))
}

/// Fresh critic for run `seed`.
pub fn init_critic(env: EnvId, arch: &ArchConfig, seed: u64) -> Result<ValueNet> {
    ValueNet::new(env.spec().obs_dim, arch, &mut seed::rng(seed, Stream::CriticInit, 0))
}

/// Everything produced by [`pretrain_pipeline`].
#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub actor: ResidualActor,
    pub critic: ValueNet,
    pub expert_data: TransitionDataset,
    pub rollout_data: TransitionDataset,
    pub bc_curve: LossCurve,
    /// `None` when no rollouts were requested and the critic kept its
    /// random initialization.
    pub critic_curve: Option<LossCurve>,
    /// `n_exp` and `n_rol` filled in; fine-tuning fields zero.
    pub metrics: RunMetrics,
    /// Environment `step` calls made, from the environments' counters.
    pub env_steps: u64,
}

/// Expert collection, behavioral cloning, rollouts and critic regression,
/// in that order. With `n_rol = 0` the critic stays at its initialization.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_pipeline(
    env: EnvId,
    controller: &ExpertController,
    n_exp: u64,
    n_rol: u64,
    cfg: &PretrainConfig,
    arch: &ArchConfig,
    seed: u64,
    exec: Exec,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let (expert_data, expert_stats) = collect_expert(env, controller, n_exp, cfg.gamma, seed, exec)?;
    let mut actor = init_actor(env, arch, seed)?;
    let bc_curve = bc_pretrain(&mut actor, &expert_data, cfg, seed, exec)?;
    let mut critic = init_critic(env, arch, seed)?;
    let (rollout_data, rollout_stats) =
        collect_rollouts(env, &actor, n_rol, cfg.gamma, cfg.tau_for(env), false, seed, exec)?;
    let critic_curve = if rollout_data.is_empty() {
        None
    } else {
        Some(critic_pretrain(&mut critic, &rollout_data, cfg, seed, exec)?)
    };
    let mut metrics =
        RunMetrics { n_exp: expert_data.total_steps(), n_rol: rollout_data.total_steps(), ..Default::default() };
    metrics.update_total();
    Ok(PretrainOutcome {
        actor,
        critic,
        expert_data,
        rollout_data,
        bc_curve,
        critic_curve,
        metrics,
        env_steps: expert_stats.env_steps + rollout_stats.env_steps,
    })
}
