//! The value-iteration potential network: three convolutional stages that
//! plan on a learned reward map, a dense head producing one potential per
//! action, and its training step against message-passing labels.

mod checkpoint;
mod fixture;
mod network;
mod wiring;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use fixture::{gradient_fixture, GradientFixture};
pub use network::{lookahead_f, ForwardOutput, ImageSet, VinArch, VinConfig, VinNetwork};
pub use wiring::{hand_wired_planner, planning_world, WALL_COST};
