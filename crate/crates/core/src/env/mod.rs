//! Built-in continuous-control environments and their scripted experts.
//!
//! | id              | d_s | d_a | T   | reward                         | ends by          |
//! |-----------------|-----|-----|-----|--------------------------------|------------------|
//! | `point-reach`   | 4   | 2   | 100 | `-|p| - c_u |u|^2`              | settling at goal |
//! | `cartpole-cont` | 4   | 1   | 200 | `+1` while upright             | falling          |
//! | `linquad`       | 2   | 1   | 50  | `-(x^T Q x + u^T R u)`          | truncation only  |
//!
//! Each environment's physical constants are listed by [`Env::describe`].

pub mod cartpole;
mod expert;
pub mod linquad;
pub mod point_reach;
pub mod riccati;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cartpole::CartPole;
pub use expert::{analytic_value, ExpertController};
pub use linquad::LinQuad;
pub use point_reach::PointReach;

/// Identifier of a built-in environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvId {
    #[serde(rename = "point-reach")]
    PointReach,
    #[serde(rename = "cartpole-cont")]
    CartpoleCont,
    #[serde(rename = "linquad")]
    LinQuad,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::PointReach, EnvId::CartpoleCont, EnvId::LinQuad];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::PointReach => "point-reach",
            EnvId::CartpoleCont => "cartpole-cont",
            EnvId::LinQuad => "linquad",
        }
    }

    /// Fresh instance. Call [`Env::reset`] before stepping.
    pub fn make(self) -> Box<dyn Env> {
        match self {
            EnvId::PointReach => Box::new(PointReach::new()),
            EnvId::CartpoleCont => Box::new(CartPole::new()),
            EnvId::LinQuad => Box::new(LinQuad::new()),
        }
    }

    pub fn spec(self) -> EnvSpec {
        match self {
            EnvId::PointReach => point_reach::spec(),
            EnvId::CartpoleCont => cartpole::spec(),
            EnvId::LinQuad => linquad::spec(),
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvId::ALL.into_iter().find(|id| id.as_str() == s).ok_or_else(|| Error::UnknownEnv(s.to_string()))
    }
}

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub id: EnvId,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub nominal_horizon: usize,
    /// Bound on `|r|` for every reward the environment can emit.
    pub r_max: f64,
    /// Undiscounted episodic return that counts as solved.
    pub target_return: f64,
    /// Expected return of the zero-action policy; the lower anchor used when
    /// expressing returns as fractions of the target.
    pub baseline_return: f64,
    /// Whether the nominal horizon is an artificial truncation of an
    /// otherwise longer task.
    pub supports_extension: bool,
}

impl EnvSpec {
    /// Maps `baseline_return` to 0 and `target_return` to 1.
    pub fn fraction_of_target(&self, ret: f64) -> f64 {
        (ret - self.baseline_return) / (self.target_return - self.baseline_return)
    }

    /// Return that sits at fraction `c` between baseline and target.
    pub fn return_at_fraction(&self, c: f64) -> f64 {
        self.baseline_return + c * (self.target_return - self.baseline_return)
    }

    /// Default tolerance for the extended step limit: 1% of `|G_tar|`.
    pub fn default_tau(&self) -> f64 {
        0.01 * self.target_return.abs()
    }
}

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_obs: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// A deterministic, seeded, single-threaded environment instance.
pub trait Env: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a fresh episode whose initial state depends only on `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Advances one tick. `truncated` is set exactly when the episode step
    /// counter reaches `step_limit` without termination.
    fn step(&mut self, action: &[f64], step_limit: usize) -> Result<StepResult>;

    /// Steps taken in the current episode.
    fn elapsed(&self) -> usize;

    /// Steps taken by this instance since construction, across episodes.
    fn total_steps(&self) -> u64;

    /// Physical constants and reward coefficients.
    fn describe(&self) -> Vec<(&'static str, f64)>;
}

/// All built-in environment specs.
pub fn env_catalog() -> Vec<EnvSpec> {
    EnvId::ALL.iter().map(|id| id.spec()).collect()
}

/// Shared per-episode bookkeeping for the built-in environments.
#[derive(Debug, Clone, Default)]
pub(crate) struct EpisodeClock {
    pub elapsed: usize,
    pub total: u64,
    pub active: bool,
}

impl EpisodeClock {
    pub fn reset(&mut self) {
        self.elapsed = 0;
        self.active = true;
    }

    pub fn begin_step(&mut self, id: EnvId, action: &[f64], act_dim: usize, step_limit: usize) -> Result<()> {
        if !self.active {
            return Err(Error::InvalidParameter(format!("{id}: step called without an active episode")));
        }
        if action.len() != act_dim {
            return Err(Error::DimensionMismatch { what: "action", expected: act_dim, got: action.len() });
        }
        if action.iter().any(|a| a.is_nan()) {
            return Err(Error::NonFinite(format!("{id} action")));
        }
        if step_limit == 0 {
            return Err(Error::InvalidParameter("step_limit must be at least 1".into()));
        }
        Ok(())
    }

    /// Counts the step and resolves the termination/truncation flags.
    pub fn finish_step(&mut self, terminated: bool, step_limit: usize) -> (bool, bool) {
        self.elapsed += 1;
        self.total += 1;
        let truncated = !terminated && self.elapsed >= step_limit;
        if terminated || truncated {
            self.active = false;
        }
        (terminated, truncated)
    }
}

pub(crate) fn clip(x: f64, bound: f64) -> f64 {
    x.clamp(-bound, bound)
}
