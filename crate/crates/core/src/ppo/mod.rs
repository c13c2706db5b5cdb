//! Proximal policy optimization for the thruster policy.
//!
//! Separate actor and critic MLPs (tanh hidden layers) act on normalized
//! observations. The actor emits eight logits, one independent Bernoulli per
//! thruster; training samples from them and evaluation fires every thruster
//! whose probability is at least one half.

pub mod gae;
pub mod mlp;
pub mod norm;
pub mod policy;
pub mod train;
pub mod update;

use thiserror::Error;

use crate::env::EnvError;

pub use gae::gae;
pub use mlp::{Init, Mlp};
pub use norm::RunningNorm;
pub use policy::{Policy, PolicyParams};
pub use train::{train, EpochLog, Trainer};
pub use update::{ppo_update, Adam, Batch, PpoConfig, UpdateStats};

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
