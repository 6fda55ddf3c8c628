//! Policy/value network and asynchronous actor-critic training.

pub mod a3c;
pub mod net;
pub mod shared;
pub mod train;

pub use a3c::{
    a3c_losses, a3c_losses_with, discounted_returns, sample_actions, sample_actions_with, EpisodeTrace, LossBreakdown,
    LossOptions, SampleMode,
};
pub use net::{Architecture, GradientSet, Logits, NetOutput, PolicyValueNet, TensorSpec};
pub use shared::{apply_update, SharedParams};
pub use train::{evaluate_zfc_gap, rollout, train, zfc_gap, TrainConfig, TrainEvent, TrainOutcome, TrainRecord};
