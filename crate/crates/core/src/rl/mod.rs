//! Tabular actor-critic with λ-returns, potential-shaped value mixing, and
//! the training loop that interleaves it with the potential network.

mod tables;
mod train;
mod update;

pub use tables::{CriticTable, PolicyTable};
pub use train::{train, train_logged, train_with, EpisodeMetrics, GraphReset, ShapingMode, TrainConfig};
pub use update::{
    episode_update, lambda_returns, shaped_reward, Potential, Trajectory, Transition, UpdateParams, UpdateStats,
};
