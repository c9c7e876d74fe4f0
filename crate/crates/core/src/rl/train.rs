use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tables::{CriticTable, PolicyTable};
use super::update::{episode_update, shaped_reward, Potential, Transition, UpdateParams};
use crate::env::{Episode, Gridworld};
use crate::error::{Error, Result};
use crate::graph::ExperienceGraph;
use crate::messages::{message_labels, OptimalityModel};
use crate::numcore::Adam;
use crate::vinrs::{ImageSet, VinConfig, VinNetwork};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShapingMode {
    None,
    ExactMessages,
    Cnn,
}

impl ShapingMode {
    pub const ALL: [ShapingMode; 3] = [ShapingMode::None, ShapingMode::ExactMessages, ShapingMode::Cnn];

    pub fn name(self) -> &'static str {
        match self {
            ShapingMode::None => "none",
            ShapingMode::ExactMessages => "exact_messages",
            ShapingMode::Cnn => "cnn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// When the experience graph is emptied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphReset {
    /// After each CNN training round.
    EveryRound,
    EveryEpisode,
    Never,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    pub alpha_mix: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub epsilon: f64,
    pub shaping_mode: ShapingMode,
    /// Optimizer steps per CNN training round.
    pub k_train: usize,
    pub temperature: f64,
    pub graph_reset: GraphReset,
    pub vin: VinConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            alpha_mix: 0.9,
            gamma: 0.99,
            lambda: 0.95,
            actor_lr: 0.1,
            critic_lr: 0.1,
            epsilon: 0.1,
            shaping_mode: ShapingMode::None,
            k_train: 20,
            temperature: 1.0,
            graph_reset: GraphReset::EveryRound,
            vin: VinConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(0.0..=1.0).contains(&self.alpha_mix) {
            return bad("alpha_mix must be in [0, 1]");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must be in [0, 1]");
        }
        if !(self.actor_lr >= 0.0 && self.critic_lr >= 0.0) {
            return bad("learning rates must be non-negative");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if self.shaping_mode == ShapingMode::Cnn && self.k_train == 0 {
            return bad("k_train must be positive");
        }
        self.vin.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeMetrics {
    /// 1-based.
    pub episode: usize,
    pub steps: usize,
    pub cumulative_steps: usize,
    pub return_: f64,
    pub shaped_return: f64,
    /// Loss of the last CNN optimizer step, on episodes that trained it.
    pub cnn_loss: Option<f64>,
}

/// Stream seeds derived from the run seed; the policy stream is shared by
/// every mode so that runs differ only through the updates.
fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

struct Shaper {
    mode: ShapingMode,
    table: Vec<[f64; 4]>,
    net: Option<VinNetwork>,
    adam: Adam,
    model: Option<OptimalityModel>,
    images: ImageSet,
    graph: ExperienceGraph,
}

impl Shaper {
    fn new(world: &Gridworld, config: &TrainConfig, seed: u64) -> Result<Self> {
        let mut s = Self {
            mode: config.shaping_mode,
            table: vec![[0.0; 4]; world.num_states()],
            net: None,
            adam: Adam::new(config.vin.learning_rate),
            model: None,
            images: ImageSet::new(),
            graph: ExperienceGraph::new(world.step_reward()),
        };
        if s.mode == ShapingMode::Cnn {
            let net = VinNetwork::new(config.vin.clone(), world.height(), world.width(), stream_seed(seed, 2))?;
            s.table = net.potential_table(world)?;
            s.net = Some(net);
        }
        Ok(s)
    }

    fn potential(&self) -> Potential<'_> {
        match self.mode {
            ShapingMode::None => Potential::Off,
            _ => Potential::Table(&self.table),
        }
    }

    fn record(&mut self, world: &Gridworld, t: &Transition) {
        if self.mode == ShapingMode::None {
            return;
        }
        self.images.entry(t.state).or_insert_with(|| world.render(t.state));
        match self.model.as_mut() {
            Some(m) => m.observe(t.reward),
            None => self.model = Some(OptimalityModel::new(1.0, t.reward).expect("unit temperature")),
        }
        match (t.terminal, t.next_action) {
            (false, Some(a)) => {
                self.images.entry(t.next).or_insert_with(|| world.render(t.next));
                self.graph.add_transition(t.state, t.action, t.reward, t.next, a);
            }
            _ => {
                self.graph.add_terminal(t.state, t.action, t.reward);
            }
        }
    }

    /// Trains on the graph (or recomputes exact labels) and refreshes φ.
    fn train_round(&mut self, world: &Gridworld, config: &TrainConfig) -> Result<Option<f64>> {
        if self.mode == ShapingMode::None || self.graph.is_empty() {
            return Ok(None);
        }
        let mut model = self.model.expect("set when the graph was filled");
        model.temperature = config.temperature;
        let labels = message_labels(&self.graph, &model)?.label;
        let loss = match self.mode {
            ShapingMode::ExactMessages => {
                for (node, &l) in self.graph.nodes().iter().zip(&labels) {
                    self.table[node.state][node.action.index()] = l;
                }
                None
            }
            ShapingMode::Cnn => {
                let net = self.net.as_mut().expect("cnn mode owns a network");
                let mut last = 0.0;
                for _ in 0..config.k_train {
                    last = net.train_step(&self.images, &self.graph, &labels, &mut self.adam)?;
                }
                self.table = net.potential_table(world)?;
                Some(last)
            }
            ShapingMode::None => unreachable!(),
        };
        if config.graph_reset == GraphReset::EveryRound {
            self.graph.reset();
        }
        Ok(loss)
    }
}

/// Runs the full training loop, returning one metrics record per episode.
pub fn train(world: &Gridworld, config: &TrainConfig, seed: u64) -> Result<Vec<EpisodeMetrics>> {
    let mut out = Vec::with_capacity(config.episodes);
    train_with(world, config, seed, |m| out.push(m.clone()))?;
    Ok(out)
}

/// As [`train`], handing each episode's metrics and trajectory to `observe`.
pub fn train_with(
    world: &Gridworld,
    config: &TrainConfig,
    seed: u64,
    mut observe: impl FnMut(&EpisodeMetrics),
) -> Result<()> {
    train_logged(world, config, seed, |m, _| observe(m))
}

/// As [`train_with`], also passing the trajectory and the φ table used for it.
pub fn train_logged(
    world: &Gridworld,
    config: &TrainConfig,
    seed: u64,
    mut observe: impl FnMut(&EpisodeMetrics, &[Transition]),
) -> Result<()> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 1));
    let mut policy = PolicyTable::new(world.num_states(), config.epsilon);
    let mut critic = CriticTable::new(world.num_states(), config.lambda);
    let mut shaper = Shaper::new(world, config, seed)?;
    let params = UpdateParams {
        gamma: config.gamma,
        alpha_mix: config.alpha_mix,
        actor_lr: config.actor_lr,
        critic_lr: config.critic_lr,
    };
    let period = config.vin.train_period;
    let mut cumulative = 0;

    for episode in 0..config.episodes {
        let mut ep = Episode::new(world);
        let mut traj = Vec::new();
        let mut a = policy.select_action(ep.state(), &mut rng);
        loop {
            let s = ep.state();
            let step = ep.step(a)?;
            let terminal = step.done && !step.truncated;
            let next_action = if terminal {
                None
            } else {
                Some(policy.select_action(step.next, &mut rng))
            };
            let t = Transition {
                state: s,
                action: a,
                reward: step.reward,
                next: step.next,
                next_action,
                terminal,
            };
            shaper.record(world, &t);
            traj.push(t);
            if step.done {
                break;
            }
            a = next_action.expect("chosen for every non-terminal step");
        }

        let cnn_loss = if (episode + 1) % period == 0 {
            shaper.train_round(world, config)?
        } else {
            None
        };
        let potential = shaper.potential();
        let shaped_return = traj.iter().map(|t| shaped_reward(t, potential, config.gamma)).sum();
        episode_update(&mut policy, &mut critic, &traj, potential, &params)?;
        if config.graph_reset == GraphReset::EveryEpisode {
            shaper.graph.reset();
        }

        cumulative += traj.len();
        let metrics = EpisodeMetrics {
            episode: episode + 1,
            steps: traj.len(),
            cumulative_steps: cumulative,
            return_: traj.iter().map(|t| t.reward).sum(),
            shaped_return,
            cnn_loss,
        };
        observe(&metrics, &traj);
    }
    Ok(())
}
