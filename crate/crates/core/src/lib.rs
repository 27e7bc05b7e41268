//! Actor–critic warm starts for PPO.
//!
//! Pretrains a residual Gaussian actor by behavioral cloning on expert
//! demonstrations and a critic on returns of rollouts of that actor, then
//! fine-tunes both with PPO. The harness compares four regimes on desk-scale
//! environments by how many environment steps they need to reach a target
//! return.

pub mod env;
pub mod error;
pub mod harness;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod ppo;
pub mod pretrain;
pub mod seed;

pub use error::{Error, Result};
