//! Policy network: a residual convolutional encoder for the camera grid, a
//! dense trunk shared with the vector observation, and heads for the
//! continuous mean, the discrete branch logits and the state value.
//!
//! Gradients are hand-derived for this fixed architecture. Everything is
//! generic over [`Real`] so that training runs in `f32` while gradient checks
//! run in `f64`.

mod adam;
mod checkpoint;
mod dist;
pub mod layers;
mod policy;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use thiserror::Error;

pub(crate) use adam::f32_bits;
pub use adam::{Adam, AdamConfig};
pub(crate) use checkpoint::write_atomic;
pub use checkpoint::{
    config_hash, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use dist::{
    entropy, entropy_grad, greedy_action, log_prob, log_prob_grad, sample_action, ActionSample,
    ContinuousDist,
};
pub use layers::{swish, swish_grad};
pub use policy::{ForwardCache, NetConfig, OutputGrad, ParamGroup, PolicyNet, PolicyOutput};

/// Floating point type the network can run in.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite gradient in parameter group {group}")]
    NonFiniteGradient { group: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint config hash {found:016x} does not match network config {expected:016x}")]
    ConfigMismatch { expected: u64, found: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
