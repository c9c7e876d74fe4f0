use super::grid::{Action, Gridworld, StateId};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 1_000_000;
const TIE_TOL: f64 = 1e-12;

/// Converged state values, action values and greedy policy.
#[derive(Clone, Debug)]
pub struct ValueSolution {
    pub values: Vec<f64>,
    pub q: Vec<[f64; 4]>,
    pub greedy: Vec<Action>,
    pub sweeps: usize,
}

/// Synchronous value iteration with rewards attached to occupied cells:
/// `Q(s,a) = R(s) + γ·V(next(s,a))`, `V(goal) = goal_reward`, where `R(s)`
/// is the reward for arriving in `s`.
///
/// This orders actions exactly as the arrival-reward MDP does; values are
/// those of "being in" a cell, which is also what a convolutional planner
/// computes on a reward map.
pub fn exact_value_iteration(world: &Gridworld, tol: f64) -> Result<ValueSolution> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let n = world.num_states();
    let gamma = world.gamma();
    let goal = world.goal_state();
    let mut v = vec![0.0; n];
    let mut q = vec![[0.0; 4]; n];
    for sweep in 1..=MAX_SWEEPS {
        let mut next_v = vec![0.0; n];
        let mut delta: f64 = 0.0;
        for s in 0..n {
            if s == goal {
                q[s] = [world.goal_reward(); 4];
                next_v[s] = world.goal_reward();
            } else {
                let r = world.reward_at(s);
                for a in Action::ALL {
                    q[s][a.index()] = r + gamma * v[world.next_state(s, a)];
                }
                next_v[s] = q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
            delta = delta.max((next_v[s] - v[s]).abs());
        }
        v = next_v;
        if delta < tol {
            let greedy = q.iter().map(greedy_action).collect();
            return Ok(ValueSolution {
                values: v,
                q,
                greedy,
                sweeps: sweep,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "value iteration",
        iterations: MAX_SWEEPS,
        residual: f64::NAN,
    })
}

/// First action (in `Action::ALL` order) attaining the maximum.
pub fn greedy_action(q: &[f64; 4]) -> Action {
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let i = q.iter().position(|&x| x >= best - TIE_TOL).unwrap_or(0);
    Action::ALL[i]
}

/// All actions within `tol` of the maximum, as a bit set over action indices.
pub fn argmax_set(q: &[f64; 4], tol: f64) -> u8 {
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    q.iter()
        .enumerate()
        .filter(|(_, &x)| x >= best - tol)
        .fold(0, |m, (i, _)| m | (1 << i))
}

/// Finite MDP with deterministic transitions, state-action rewards and
/// absorbing terminal states, in the arrival-reward convention.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    pub next: Vec<[StateId; 4]>,
    pub reward: Vec<[f64; 4]>,
    pub terminal: Vec<bool>,
    pub gamma: f64,
}

impl TabularMdp {
    pub fn from_world(world: &Gridworld) -> Self {
        let n = world.num_states();
        let mut next = Vec::with_capacity(n);
        let mut reward = Vec::with_capacity(n);
        for s in 0..n {
            let st = Action::ALL.map(|a| world.step(s, a));
            next.push(st.map(|x| x.next));
            reward.push(st.map(|x| x.reward));
        }
        Self {
            next,
            reward,
            terminal: (0..n).map(|s| world.is_goal(s)).collect(),
            gamma: world.gamma(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.next.len()
    }

    /// Non-terminal states, the ones where a decision is made.
    pub fn decision_states(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.num_states()).filter(|&s| !self.terminal[s])
    }

    fn iterate(
        &self,
        tol: f64,
        reward: impl Fn(StateId, usize) -> f64,
        bootstrap: impl Fn(StateId, &[f64; 4]) -> f64,
    ) -> Result<Vec<[f64; 4]>> {
        let n = self.num_states();
        let mut q = vec![[0.0; 4]; n];
        for _ in 0..MAX_SWEEPS {
            let mut delta: f64 = 0.0;
            let mut nq = vec![[0.0; 4]; n];
            for s in self.decision_states() {
                for a in 0..4 {
                    let sn = self.next[s][a];
                    let cont = if self.terminal[sn] {
                        0.0
                    } else {
                        bootstrap(sn, &q[sn])
                    };
                    nq[s][a] = reward(s, a) + self.gamma * cont;
                    delta = delta.max((nq[s][a] - q[s][a]).abs());
                }
            }
            q = nq;
            if delta < tol {
                return Ok(q);
            }
        }
        Err(Error::NoConvergence {
            what: "tabular value iteration",
            iterations: MAX_SWEEPS,
            residual: f64::NAN,
        })
    }

    /// Optimal action values of the unshaped MDP.
    pub fn solve(&self, tol: f64) -> Result<Vec<[f64; 4]>> {
        self.iterate(tol, |s, a| self.reward[s][a], |_, q| max4(q))
    }

    /// Optimal action values under state-potential shaping
    /// `r + γ·φ(s') − φ(s)`, with φ = 0 at terminal states.
    pub fn solve_state_shaped(&self, phi: &[f64], tol: f64) -> Result<Vec<[f64; 4]>> {
        self.check_len(phi.len())?;
        self.iterate(
            tol,
            |s, a| {
                let sn = self.next[s][a];
                let pn = if self.terminal[sn] { 0.0 } else { phi[sn] };
                self.reward[s][a] + self.gamma * pn - phi[s]
            },
            |_, q| max4(q),
        )
    }

    /// Action values learned under look-ahead shaping
    /// `r + γ·φ(s',a') − φ(s,a)`, where `a'` is the action chosen next.
    ///
    /// The shaped values satisfy
    /// `Q'(s,a) = r − φ(s,a) + γ·max_a' [Q'(s',a') + φ(s',a')]`,
    /// and the policy acts greedily on `Q' + φ`; see [`Self::lookahead_greedy_values`].
    pub fn solve_lookahead(&self, phi: &[[f64; 4]], tol: f64) -> Result<Vec<[f64; 4]>> {
        self.check_len(phi.len())?;
        self.iterate(
            tol,
            |s, a| self.reward[s][a] - phi[s][a],
            |sn, q| {
                let mut best = f64::NEG_INFINITY;
                for a in 0..4 {
                    best = best.max(q[a] + phi[sn][a]);
                }
                best
            },
        )
    }

    /// `Q' + φ`, the quantity look-ahead shaped agents act on.
    pub fn lookahead_greedy_values(q_shaped: &[[f64; 4]], phi: &[[f64; 4]]) -> Vec<[f64; 4]> {
        q_shaped
            .iter()
            .zip(phi)
            .map(|(q, p)| [q[0] + p[0], q[1] + p[1], q[2] + p[2], q[3] + p[3]])
            .collect()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.num_states() {
            return Err(Error::Mismatch(format!(
                "potential table has {n} entries, MDP has {} states",
                self.num_states()
            )));
        }
        Ok(())
    }
}

fn max4(q: &[f64; 4]) -> f64 {
    q[0].max(q[1]).max(q[2]).max(q[3])
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::env::{four_rooms, WorldParams};
    use crate::oracle::bfs_distances;

    #[test]
    fn lone_goal_converges_immediately() {
        let w = Gridworld::new(1, 1, vec![false], (0, 0), (0, 0), BTreeMap::new(), WorldParams::default())
            .unwrap();
        let sol = exact_value_iteration(&w, 1e-12).unwrap();
        assert_eq!(sol.values, vec![1.0]);
    }

    #[test]
    fn corridor_values() {
        let params = WorldParams {
            gamma: 0.9,
            goal_reward: 1.0,
            step_reward: 0.0,
            max_episode_steps: 100,
        };
        let w = Gridworld::new(3, 1, vec![false; 3], (0, 0), (0, 2), BTreeMap::new(), params).unwrap();
        let sol = exact_value_iteration(&w, 1e-12).unwrap();
        for (v, e) in sol.values.iter().zip([0.81, 0.9, 1.0]) {
            assert!((v - e).abs() < 1e-12);
        }
        assert_eq!(sol.greedy[0], Action::Right);
    }

    #[test]
    fn greedy_rollout_follows_shortest_path() {
        let w = four_rooms();
        let sol = exact_value_iteration(&w, 1e-12).unwrap();
        let dist = bfs_distances(&w.open_mask(), w.goal());
        for start in 0..w.num_states() {
            let mut s = start;
            let mut steps = 0;
            while !w.is_goal(s) && steps <= w.num_states() {
                s = w.next_state(s, sol.greedy[s]);
                steps += 1;
            }
            let (r, c) = w.cell_of(start);
            assert_eq!(Some(steps), dist[r][c], "from {:?}", (r, c));
        }
    }

    #[test]
    fn values_are_max_of_q() {
        let sol = exact_value_iteration(&four_rooms(), 1e-10).unwrap();
        for (v, q) in sol.values.iter().zip(&sol.q) {
            assert!((v - max4(q)).abs() <= 1e-10);
        }
    }

    #[test]
    fn tabular_and_grid_solvers_agree_on_policy() {
        let w = four_rooms();
        let mdp = TabularMdp::from_world(&w);
        let q = mdp.solve(1e-12).unwrap();
        let sol = exact_value_iteration(&w, 1e-12).unwrap();
        for s in mdp.decision_states() {
            assert_eq!(argmax_set(&q[s], 1e-9), argmax_set(&sol.q[s], 1e-9));
        }
    }
}
