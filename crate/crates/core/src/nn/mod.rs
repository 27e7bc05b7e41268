//! Minimal feedforward engine: ReLU MLPs with exact reverse-mode gradients,
//! Adam over named parameter partitions, the diagonal Gaussian policy head,
//! the residual backbone/head actor and a scalar critic.

mod actor;
mod adam;
pub mod checkpoint;
pub mod gaussian;
mod mlp;

pub(crate) use actor::add;
pub use actor::{ActorGrads, ActorMask, ActorTape, ArchConfig, ResidualActor, ValueNet};
pub use adam::{AdamState, ParamBlock};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use mlp::{MlpNet, Tape};
