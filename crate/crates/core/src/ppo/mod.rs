//! PPO fine-tuning: composite clipped objective, the four training regimes,
//! target-return stopping and frozen-backbone updates.

mod buffer;
mod finetune;
mod loss;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use buffer::{RolloutBuffer, Segment};
pub use finetune::{
    collect_buffer, evaluate, evaluation_seed, finetune, pirl_change_rate, ppo_update, FinetuneOutcome, StartingPoint,
    UpdateStats, CHANGE_RATE_WINDOW,
};
pub use loss::{ppo_loss, ppo_loss_and_grad, LossCoefficients, LossTerms, PpoBatch};

/// PPO hyperparameters and the fine-tuning schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_epsilon: f64,
    /// Weight of the value loss.
    pub c1: f64,
    /// Weight of the entropy bonus.
    pub c2: f64,
    pub learning_rate: f64,
    /// Environment steps collected per update.
    pub rollout_length: usize,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    /// Fine-tuning budget in environment steps.
    pub max_env_steps: u64,
    /// Steps between evaluations; stopping is only checked at these points.
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Normalize advantages per minibatch.
    pub normalize_advantages: bool,
    /// Keep the backbone of a pretrained actor fixed during fine-tuning.
    pub freeze_backbone: bool,
    /// Relative value-loss change below which the PIRL warm-up ends.
    pub pirl_change_rate_threshold: f64,
    /// Overrides the environment's target return.
    pub target_return: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip_epsilon: 0.2,
            c1: 0.5,
            c2: 0.0,
            learning_rate: 3e-4,
            rollout_length: 2048,
            epochs_per_update: 10,
            minibatch_size: 64,
            max_env_steps: 200_000,
            eval_interval: 2048,
            eval_episodes: 30,
            normalize_advantages: true,
            freeze_backbone: true,
            pirl_change_rate_threshold: 0.10,
            target_return: None,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("ppo.gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return fail(format!("ppo.lambda must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return fail(format!("ppo.clip_epsilon must lie in (0, 1), got {}", self.clip_epsilon));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return fail("ppo.c1 and ppo.c2 must be non-negative".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("ppo.learning_rate must be non-negative, got {}", self.learning_rate));
        }
        if self.minibatch_size == 0 || self.epochs_per_update == 0 {
            return fail("ppo.minibatch_size and ppo.epochs_per_update must be positive".into());
        }
        if self.rollout_length < self.minibatch_size {
            return fail(format!(
                "ppo.rollout_length ({}) must be at least ppo.minibatch_size ({})",
                self.rollout_length, self.minibatch_size
            ));
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 {
            return fail("ppo.eval_interval and ppo.eval_episodes must be positive".into());
        }
        if self.pirl_change_rate_threshold.is_nan() || self.pirl_change_rate_threshold <= 0.0 {
            return fail("ppo.pirl_change_rate_threshold must be positive".into());
        }
        Ok(())
    }

    pub fn coefficients(&self) -> LossCoefficients {
        LossCoefficients { clip_epsilon: self.clip_epsilon, c1: self.c1, c2: self.c2 }
    }
}

/// Pretraining and fine-tuning regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    /// No pretraining: both networks start at random initialization.
    #[serde(rename = "NP")]
    Np,
    /// Actor pretrained by behavioral cloning; random critic.
    #[serde(rename = "AP")]
    Ap,
    /// Actor and critic pretrained.
    #[serde(rename = "ACP")]
    Acp,
    /// AP initialization with the whole actor frozen until the value loss settles.
    #[serde(rename = "PIRL")]
    Pirl,
}

impl Regime {
    /// Report order.
    pub const ALL: [Regime; 4] = [Regime::Np, Regime::Ap, Regime::Pirl, Regime::Acp];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Np => "NP",
            Regime::Ap => "AP",
            Regime::Acp => "ACP",
            Regime::Pirl => "PIRL",
        }
    }

    pub fn needs_pretrained_actor(self) -> bool {
        self != Regime::Np
    }

    pub fn needs_pretrained_critic(self) -> bool {
        self == Regime::Acp
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Regime(format!("unknown regime `{s}` (expected NP, AP, PIRL or ACP)")))
    }
}
