//! Actor-critic boosting: GAE, experience buffers, A2C/PPO/AWR gradients and
//! the training loop.

pub mod buffer;
pub mod config;
pub mod gae;
pub mod gradients;
pub mod model;
pub mod train;

pub use buffer::{ReplayBuffer, RolloutBuffer, Transition};
pub use config::{Algo, AlgoConfig, LrSchedule, TrainConfig, TreeParams};
pub use gae::compute_gae;
pub use gradients::{
    a2c_gradient, awr_gradient, awr_weight, clip_gradients, normalize_advantages, ppo_gradient, ppo_ratio,
    GradSample,
};
pub use model::ActorCritic;
pub use train::{check_layout, mean_last, train, EpisodeRecord, NoopObserver, TrainObserver, TrainOutcome};
