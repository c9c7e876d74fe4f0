use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::grid::{Cell, Gridworld, WorldParams};
use crate::error::{Error, Result};

const FOUR_ROOMS: [&str; 13] = [
    "#############",
    "#     #     #",
    "#     #     #",
    "#           #",
    "#     #     #",
    "#     #     #",
    "## ####     #",
    "#     ### ###",
    "#     #     #",
    "#     #     #",
    "#           #",
    "#     #     #",
    "#############",
];

const TWO_ROOMS: [&str; 7] = [
    "###########",
    "#    #    #",
    "#    #    #",
    "#         #",
    "#    #    #",
    "#    #    #",
    "###########",
];

fn from_rows(rows: &[&str], start: Cell, goal: Cell, params: WorldParams) -> Result<Gridworld> {
    let height = rows.len();
    let width = rows[0].len();
    let walls = rows
        .iter()
        .flat_map(|r| r.bytes().map(|b| b == b'#'))
        .collect();
    Gridworld::new(width, height, walls, start, goal, BTreeMap::new(), params)
}

/// The classic 13×13 four-rooms maze: start top-left, goal bottom-right.
pub fn four_rooms() -> Gridworld {
    four_rooms_with(WorldParams::default())
}

pub fn four_rooms_with(params: WorldParams) -> Gridworld {
    from_rows(&FOUR_ROOMS, (1, 1), (11, 11), params).expect("built-in layout is valid")
}

/// Four rooms with `n_traps` penalty cells drawn from a seeded generator.
///
/// Traps avoid walls, doorways, the start, the goal and the goal's
/// neighbours. Zero traps yields exactly [`four_rooms`].
pub fn four_rooms_traps(n_traps: usize, penalty: f64, seed: u64) -> Result<Gridworld> {
    four_rooms_traps_with(n_traps, penalty, seed, WorldParams::default())
}

pub fn four_rooms_traps_with(
    n_traps: usize,
    penalty: f64,
    seed: u64,
    params: WorldParams,
) -> Result<Gridworld> {
    let base = four_rooms_with(params);
    if n_traps == 0 {
        return Ok(base);
    }
    if !(penalty < 0.0 && penalty.is_finite()) {
        return Err(Error::Config(format!("trap penalty must be negative, got {penalty}")));
    }
    let doorways = base.doorways();
    let goal = base.goal();
    let near_goal = |c: Cell| c.0.abs_diff(goal.0) + c.1.abs_diff(goal.1) <= 1;
    let candidates: Vec<Cell> = (0..base.num_states())
        .map(|s| base.cell_of(s))
        .filter(|&c| c != base.start() && !near_goal(c) && !doorways.contains(&c))
        .collect();
    if n_traps > candidates.len() {
        return Err(Error::Config(format!(
            "{n_traps} traps requested but only {} eligible cells",
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, candidates.len(), n_traps).into_vec();
    picks.sort_unstable();
    let traps = picks.into_iter().map(|i| (candidates[i], penalty)).collect();
    Gridworld::new(
        base.width(),
        base.height(),
        base.walls().to_vec(),
        base.start(),
        goal,
        traps,
        params,
    )
}

/// A straight corridor of `len` free cells inside a ring of walls;
/// start at the left end, goal at the right end.
pub fn corridor(len: usize, params: WorldParams) -> Result<Gridworld> {
    if len < 2 {
        return Err(Error::Config("corridor needs at least two cells".into()));
    }
    let width = len + 2;
    let walls = (0..3 * width)
        .map(|i| {
            let (r, c) = (i / width, i % width);
            r != 1 || c == 0 || c == width - 1
        })
        .collect();
    Gridworld::new(width, 3, walls, (1, 1), (1, len), BTreeMap::new(), params)
}

/// Two 4×4 rooms joined by a single doorway; start top-left, goal bottom-right.
pub fn two_rooms(params: WorldParams) -> Gridworld {
    from_rows(&TWO_ROOMS, (1, 1), (5, 9), params).expect("built-in layout is valid")
}
