//! Benchmark fixtures shared by the criterion targets.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vinrs_core::env::{four_rooms, Action, Episode, Gridworld};
use vinrs_core::graph::ExperienceGraph;
use vinrs_core::vinrs::ImageSet;

/// A four-rooms experience graph from `episodes` seeded random walks, with a rendered image for every visited state.
pub fn four_rooms_graph(episodes: usize, max_steps: usize) -> (Gridworld, ExperienceGraph, ImageSet) {
    let world = four_rooms();
    let mut g = ExperienceGraph::new(world.step_reward());
    let mut images = ImageSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..episodes {
        let mut ep = Episode::new(&world);
        let mut pick = || Action::ALL[rng.gen_range(0..Action::COUNT)];
        let mut a = pick();
        for t in 0..max_steps {
            let s = ep.state();
            images.entry(s).or_insert_with(|| world.render(s));
            let st = ep.step(a).expect("episode running");
            images.entry(st.next).or_insert_with(|| world.render(st.next));
            if st.done || t + 1 == max_steps {
                g.add_terminal(s, a, st.reward);
                break;
            }
            let next = pick();
            g.add_transition(s, a, st.reward, st.next, next);
            a = next;
        }
    }
    (world, g, images)
}
