use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Dense index over the non-wall cells of a [`Gridworld`], row-major.
pub type StateId = usize;

/// `(row, column)`, origin at the top-left corner.
pub type Cell = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    /// Row and column offsets of the move.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        };
        f.write_str(s)
    }
}

/// Scalar parameters of a gridworld that are independent of its layout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldParams {
    pub gamma: f64,
    pub goal_reward: f64,
    pub step_reward: f64,
    pub max_episode_steps: usize,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            goal_reward: 1.0,
            step_reward: -0.01,
            max_episode_steps: 500,
        }
    }
}

/// Result of one transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub next: StateId,
    pub reward: f64,
    /// The goal was reached or the step cap was hit.
    pub done: bool,
    /// `done` because of the step cap rather than the goal.
    pub truncated: bool,
}

/// A deterministic 4-connected grid MDP with an absorbing goal.
#[derive(Clone, Debug, PartialEq)]
pub struct Gridworld {
    width: usize,
    height: usize,
    walls: Vec<bool>,
    start: Cell,
    goal: Cell,
    traps: BTreeMap<Cell, f64>,
    params: WorldParams,
    cells: Vec<Cell>,
    index: Vec<Option<StateId>>,
    next: Vec<[StateId; 4]>,
}

impl Gridworld {
    /// Builds and validates a world. `walls` is row-major, `height × width`.
    pub fn new(
        width: usize,
        height: usize,
        walls: Vec<bool>,
        start: Cell,
        goal: Cell,
        traps: BTreeMap<Cell, f64>,
        params: WorldParams,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config("grid must have at least one cell".into()));
        }
        if walls.len() != width * height {
            return Err(Error::Config(format!(
                "wall mask has {} cells, expected {}",
                walls.len(),
                width * height
            )));
        }
        if !(params.gamma > 0.0 && params.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must be in (0, 1], got {}", params.gamma)));
        }
        if params.max_episode_steps == 0 {
            return Err(Error::Config("max_episode_steps must be positive".into()));
        }
        if !params.goal_reward.is_finite() || !params.step_reward.is_finite() {
            return Err(Error::Config("rewards must be finite".into()));
        }
        let inside = |c: Cell| c.0 < height && c.1 < width;
        let is_wall = |c: Cell| walls[c.0 * width + c.1];
        for (what, c) in [("start", start), ("goal", goal)] {
            if !inside(c) || is_wall(c) {
                return Err(Error::Config(format!("{what} {c:?} is outside the grid or a wall")));
            }
        }
        for (&c, &p) in &traps {
            if !inside(c) || is_wall(c) {
                return Err(Error::Config(format!("trap {c:?} is outside the grid or a wall")));
            }
            if c == goal || c == start {
                return Err(Error::Config(format!("trap {c:?} coincides with the goal or start")));
            }
            if !(p < 0.0 && p.is_finite()) {
                return Err(Error::Config(format!("trap {c:?} penalty must be negative, got {p}")));
            }
        }

        let mut cells = Vec::new();
        let mut index = vec![None; width * height];
        for r in 0..height {
            for c in 0..width {
                if !walls[r * width + c] {
                    index[r * width + c] = Some(cells.len());
                    cells.push((r, c));
                }
            }
        }
        let mut world = Self {
            width,
            height,
            walls,
            start,
            goal,
            traps,
            params,
            cells,
            index,
            next: Vec::new(),
        };
        world.next = (0..world.cells.len())
            .map(|s| Action::ALL.map(|a| world.compute_next(s, a)))
            .collect();

        let mut seen = vec![false; world.cells.len()];
        let g = world.goal_state();
        seen[g] = true;
        let mut queue = VecDeque::from([g]);
        while let Some(s) = queue.pop_front() {
            for n in world.neighbors(s) {
                if !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        if let Some(s) = seen.iter().position(|&v| !v) {
            return Err(Error::Config(format!(
                "cell {:?} cannot reach the goal",
                world.cells[s]
            )));
        }
        Ok(world)
    }

    /// Same layout with different scalar parameters.
    pub fn with_params(&self, params: WorldParams) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.walls.clone(),
            self.start,
            self.goal,
            self.traps.clone(),
            params,
        )
    }

    fn compute_next(&self, s: StateId, a: Action) -> StateId {
        let (r, c) = self.cells[s];
        let (dr, dc) = a.delta();
        let nr = r as isize + dr;
        let nc = c as isize + dc;
        if nr < 0 || nc < 0 || nr >= self.height as isize || nc >= self.width as isize {
            return s;
        }
        self.state_of((nr as usize, nc as usize)).unwrap_or(s)
    }

    fn neighbors(&self, s: StateId) -> impl Iterator<Item = StateId> + '_ {
        self.next[s].into_iter().filter(move |&n| n != s)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn params(&self) -> WorldParams {
        self.params
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }

    pub fn goal_reward(&self) -> f64 {
        self.params.goal_reward
    }

    pub fn step_reward(&self) -> f64 {
        self.params.step_reward
    }

    pub fn max_episode_steps(&self) -> usize {
        self.params.max_episode_steps
    }

    pub fn num_states(&self) -> usize {
        self.cells.len()
    }

    pub fn is_wall(&self, cell: Cell) -> bool {
        self.walls[cell.0 * self.width + cell.1]
    }

    pub fn walls(&self) -> &[bool] {
        &self.walls
    }

    pub fn state_of(&self, cell: Cell) -> Option<StateId> {
        if cell.0 < self.height && cell.1 < self.width {
            self.index[cell.0 * self.width + cell.1]
        } else {
            None
        }
    }

    pub fn cell_of(&self, s: StateId) -> Cell {
        self.cells[s]
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn start_state(&self) -> StateId {
        self.state_of(self.start).expect("validated at construction")
    }

    pub fn goal_state(&self) -> StateId {
        self.state_of(self.goal).expect("validated at construction")
    }

    pub fn is_goal(&self, s: StateId) -> bool {
        self.cells[s] == self.goal
    }

    pub fn traps(&self) -> &BTreeMap<Cell, f64> {
        &self.traps
    }

    /// Free cells with walls (or the border) on two opposite sides.
    pub fn doorways(&self) -> Vec<Cell> {
        let blocked = |r: isize, c: isize| {
            r < 0
                || c < 0
                || r >= self.height as isize
                || c >= self.width as isize
                || self.is_wall((r as usize, c as usize))
        };
        self.cells
            .iter()
            .copied()
            .filter(|&(r, c)| {
                let (r, c) = (r as isize, c as isize);
                (blocked(r - 1, c) && blocked(r + 1, c)) || (blocked(r, c - 1) && blocked(r, c + 1))
            })
            .collect()
    }

    /// Reward collected when a move ends in `s`.
    pub fn reward_at(&self, s: StateId) -> f64 {
        let cell = self.cells[s];
        if cell == self.goal {
            self.params.goal_reward
        } else {
            self.traps.get(&cell).copied().unwrap_or(self.params.step_reward)
        }
    }

    /// Deterministic successor; bumping into a wall or the border stays put.
    pub fn next_state(&self, s: StateId, a: Action) -> StateId {
        self.next[s][a.index()]
    }

    /// One transition, ignoring the episode step cap.
    pub fn step(&self, s: StateId, a: Action) -> Step {
        let next = self.next_state(s, a);
        Step {
            next,
            reward: self.reward_at(next),
            done: self.is_goal(next),
            truncated: false,
        }
    }

    /// Observation planes `[walls, goal/traps, agent]`, shape `3 × H × W`.
    pub fn render(&self, s: StateId) -> Tensor {
        let (h, w) = (self.height, self.width);
        let mut t = Tensor::zeros(&[3, h, w]);
        for r in 0..h {
            for c in 0..w {
                if self.is_wall((r, c)) {
                    t.set(&[0, r, c], 1.0);
                }
            }
        }
        t.set(&[1, self.goal.0, self.goal.1], 1.0);
        let scale = self.traps.values().fold(0.0f64, |m, p| m.max(p.abs()));
        for (&(r, c), &p) in &self.traps {
            t.set(&[1, r, c], p / scale);
        }
        let (r, c) = self.cells[s];
        t.set(&[2, r, c], 1.0);
        t
    }

    /// Traversability mask, `open[r][c]` true for non-wall cells.
    pub fn open_mask(&self) -> Vec<Vec<bool>> {
        (0..self.height)
            .map(|r| (0..self.width).map(|c| !self.is_wall((r, c))).collect())
            .collect()
    }
}

/// Caller-owned progress through one episode.
#[derive(Clone, Debug)]
pub struct Episode<'w> {
    world: &'w Gridworld,
    state: StateId,
    steps: usize,
    done: bool,
}

impl<'w> Episode<'w> {
    pub fn new(world: &'w Gridworld) -> Self {
        Self::from_state(world, world.start_state())
    }

    pub fn from_state(world: &'w Gridworld, state: StateId) -> Self {
        Self {
            world,
            state,
            steps: 0,
            done: world.is_goal(state),
        }
    }

    pub fn state(&self) -> StateId {
        self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn step(&mut self, a: Action) -> Result<Step> {
        if self.done {
            return Err(Error::Config("step called on a finished episode".into()));
        }
        let mut out = self.world.step(self.state, a);
        self.steps += 1;
        self.state = out.next;
        if !out.done && self.steps >= self.world.max_episode_steps() {
            out.done = true;
            out.truncated = true;
        }
        self.done = out.done;
        Ok(out)
    }
}
