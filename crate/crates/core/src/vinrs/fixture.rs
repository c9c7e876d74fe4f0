use super::network::{ImageSet, VinConfig, VinNetwork};
use crate::env::{parse_map, Action, Gridworld};
use crate::graph::ExperienceGraph;

/// A small, fully specified training problem for gradient checking: a
/// three-cell corridor, five graph nodes, hand-set labels and a seeded
/// network with `K = 3`.
pub struct GradientFixture {
    pub world: Gridworld,
    pub graph: ExperienceGraph,
    pub labels: Vec<f64>,
    pub images: ImageSet,
    pub net: VinNetwork,
}

pub fn gradient_fixture() -> GradientFixture {
    use Action::*;
    let world = parse_map("gamma=0.99 step_reward=-0.01\n#####\n#S.G#\n#####\n").expect("valid map");
    let s = |c| world.state_of(c).expect("free cell");
    let steps = [
        ((1, 2), Left, -0.01),
        ((1, 1), Up, -0.01),
        ((1, 1), Down, -0.01),
        ((1, 1), Right, -0.01),
        ((1, 2), Right, 1.0),
    ];
    let mut graph = ExperienceGraph::new(world.step_reward());
    for w in steps.windows(2) {
        let ((c, a, r), (c2, a2, _)) = (w[0], w[1]);
        graph.add_transition(s(c), a, r, s(c2), a2);
    }
    let (c, a, r) = steps[4];
    graph.add_terminal(s(c), a, r);
    let images = graph.states().into_iter().map(|x| (x, world.render(x))).collect();
    let config = VinConfig {
        k_iterations: 3,
        hidden_units: 8,
        ..VinConfig::default()
    };
    let net = VinNetwork::new(config, world.height(), world.width(), 9).expect("valid config");
    GradientFixture {
        world,
        graph,
        labels: vec![0.1, 0.3, 0.5, 0.7, 0.95],
        images,
        net,
    }
}
