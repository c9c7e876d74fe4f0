use rand::Rng;

use crate::env::Action;
use crate::graph::ExperienceGraph;

/// Random acyclic experience graph with at most `max_nodes` nodes.
///
/// Node `i` is `(state i, action i mod 4)`. A hidden DAG orders the nodes;
/// a few episodes walk it forward from starts in its first half and stop either at a
/// sink or at random. Rewards mix step, goal, trap and arbitrary values.
pub fn random_episode_dag(rng: &mut impl Rng, max_nodes: usize, step_reward: f64) -> ExperienceGraph {
    let n = rng.gen_range(2..=max_nodes.max(2));
    let reward: Vec<f64> = (0..n)
        .map(|_| match rng.gen_range(0..4) {
            0 => 1.0,
            1 => -1.0,
            2 => rng.gen_range(-1.0..1.0),
            _ => step_reward,
        })
        .collect();
    let density = rng.gen_range(0.15..0.6);
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|i| (i + 1..n).filter(|_| rng.gen_bool(density)).collect())
        .collect();
    let action = |i: usize| Action::ALL[i % Action::COUNT];
    let mut g = ExperienceGraph::new(step_reward);
    for _ in 0..rng.gen_range(2..=8) {
        let mut cur = rng.gen_range(0..n.div_ceil(2));
        loop {
            if succ[cur].is_empty() || rng.gen_bool(0.15) {
                g.add_terminal(cur, action(cur), reward[cur]);
                break;
            }
            let next = succ[cur][rng.gen_range(0..succ[cur].len())];
            g.add_transition(cur, action(cur), reward[cur], next, action(next));
            cur = next;
        }
    }
    g
}
