//! Small neural networks with hand-written gradients, policy heads and an
//! advantage actor-critic learner.

use thiserror::Error;

pub mod a2c;
pub mod head;
pub mod mlp;
pub mod optim;
pub mod rnn;

pub use a2c::{a2c_update, discounted_returns, A2cConfig, ActorCritic, Checkpoint, HeadKind, LossReport, Trajectory, Transition};
pub use head::{greedy, softmax, Action, ActionDist, LOG_STD_MAX, LOG_STD_MIN};
pub use mlp::{Mlp, Tape};
pub use optim::{clip_grad_norm, RunningStat, SgdMomentum};
pub use rnn::{sigmoid, RecurrentCell, SeqTape};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("non-finite {0}; update skipped")]
    Numerics(String),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
