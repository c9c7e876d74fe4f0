//! Deterministic gridworlds, their observation images and exact planners.

mod grid;
mod layouts;
mod mapfile;
mod solve;

pub use grid::{Action, Cell, Episode, Gridworld, StateId, Step, WorldParams};
pub use layouts::{
    corridor, four_rooms, four_rooms_traps, four_rooms_traps_with, four_rooms_with, two_rooms,
};
pub use mapfile::{parse_map, write_map};
pub use solve::{argmax_set, exact_value_iteration, greedy_action, TabularMdp, ValueSolution};
