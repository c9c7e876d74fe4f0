use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Action, Gridworld, StateId};
use crate::error::{shape_err, Error, Result};
use crate::graph::ExperienceGraph;
use crate::messages::graph_loss_and_grad;
use crate::numcore::{ops, Optimizer, ParamId, ParamStore, Tape, Tensor, Var};

/// Rendered observation per state.
pub type ImageSet = BTreeMap<StateId, Tensor>;

#[derive(Clone, Debug, PartialEq)]
pub struct VinConfig {
    /// Value-iteration refinements after the first Q evaluation.
    pub k_iterations: usize,
    pub h_channels: usize,
    pub q_channels: usize,
    pub kernel_size: usize,
    /// Width of the hidden dense layer between the Q map and the output.
    pub hidden_units: usize,
    pub eta: f64,
    pub train_period: usize,
    pub learning_rate: f64,
}

impl Default for VinConfig {
    fn default() -> Self {
        Self {
            k_iterations: 26,
            h_channels: 8,
            q_channels: Action::COUNT,
            kernel_size: 3,
            hidden_units: 32,
            eta: 10.0,
            train_period: 10,
            learning_rate: 1e-3,
        }
    }
}

impl VinConfig {
    /// Defaults with `K = 2 × width`.
    pub fn for_width(width: usize) -> Self {
        Self {
            k_iterations: 2 * width,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k_iterations == 0 {
            return bad("k_iterations must be at least 1".into());
        }
        if self.q_channels != Action::COUNT {
            return bad(format!("q_channels must equal the action count {}", Action::COUNT));
        }
        if self.kernel_size.is_multiple_of(2) {
            return bad(format!("kernel_size must be odd, got {}", self.kernel_size));
        }
        if self.h_channels == 0 || self.hidden_units == 0 {
            return bad("h_channels and hidden_units must be positive".into());
        }
        if self.train_period == 0 {
            return bad("train_period must be positive".into());
        }
        if !(self.eta >= 0.0) || !(self.learning_rate >= 0.0) {
            return bad("eta and learning_rate must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Ids {
    h_kernel: ParamId,
    h_bias: ParamId,
    r_kernel: ParamId,
    r_bias: ParamId,
    w_q: ParamId,
    w_v: ParamId,
    fn_weight: ParamId,
    fn_bias: ParamId,
    out_weight: ParamId,
    out_bias: ParamId,
}

/// Network structure without its weights.
#[derive(Clone, Debug)]
pub struct VinArch {
    config: VinConfig,
    height: usize,
    width: usize,
    ids: Ids,
}

pub struct ForwardOutput {
    pub phi: [f64; 4],
    pub rmap: Tensor,
    pub qmap: Tensor,
    pub vmap: Tensor,
}

/// Parameters placed on a tape once and shared by every forward pass on it.
struct Bound {
    h_kernel: Var,
    h_bias: Var,
    r_kernel: Var,
    r_bias: Var,
    w_q: Var,
    w_v: Var,
    fn_weight: Var,
    fn_bias: Var,
    out_weight: Var,
    out_bias: Var,
}

struct ForwardVars {
    phi: Var,
    r: Var,
    q: Var,
    v: Var,
}

/// Parameter shapes in creation order; also the checkpoint layout.
pub(crate) fn param_shapes(config: &VinConfig, height: usize, width: usize) -> Vec<(&'static str, Vec<usize>)> {
    let (h, k, x, hid) = (config.h_channels, config.kernel_size, config.q_channels, config.hidden_units);
    vec![
        ("cnn_h.kernel", vec![h, 3, 3, 3]),
        ("cnn_h.bias", vec![h]),
        ("cnn_r.kernel", vec![1, h, 1, 1]),
        ("cnn_r.bias", vec![1]),
        ("w_q", vec![x, 1, k, k]),
        ("w_v", vec![x, 1, k, k]),
        ("fn.weight", vec![hid, x * height * width]),
        ("fn.bias", vec![hid]),
        ("opt.weight", vec![x, hid]),
        ("opt.bias", vec![x]),
    ]
}

impl VinArch {
    pub fn config(&self) -> &VinConfig {
        &self.config
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn check_obs(&self, obs: &Tensor) -> Result<()> {
        if obs.shape() != [3, self.height, self.width] {
            return Err(shape_err(
                "vin forward",
                format!("observation {:?}, network expects [3, {}, {}]", obs.shape(), self.height, self.width),
            ));
        }
        Ok(())
    }

    fn bind(&self, tape: &mut Tape, store: &ParamStore) -> Bound {
        let ids = &self.ids;
        Bound {
            h_kernel: tape.param(store, ids.h_kernel),
            h_bias: tape.param(store, ids.h_bias),
            r_kernel: tape.param(store, ids.r_kernel),
            r_bias: tape.param(store, ids.r_bias),
            w_q: tape.param(store, ids.w_q),
            w_v: tape.param(store, ids.w_v),
            fn_weight: tape.param(store, ids.fn_weight),
            fn_bias: tape.param(store, ids.fn_bias),
            out_weight: tape.param(store, ids.out_weight),
            out_bias: tape.param(store, ids.out_bias),
        }
    }

    fn forward_on(&self, tape: &mut Tape, p: &Bound, obs: &Tensor) -> Result<ForwardVars> {
        self.check_obs(obs)?;
        let x = tape.input(obs.clone());
        let h = tape.conv2d(x, p.h_kernel, Some(p.h_bias))?;
        let h = tape.relu(h)?;
        let r = tape.conv2d(h, p.r_kernel, Some(p.r_bias))?;
        let qr = tape.conv2d(r, p.w_q, None)?;
        let mut q = qr;
        let mut v = tape.channel_max(q)?;
        for _ in 0..=self.config.k_iterations {
            let v3 = tape.reshape(v, &[1, self.height, self.width])?;
            let qv = tape.conv2d(v3, p.w_v, None)?;
            q = tape.add(qr, qv)?;
            v = tape.channel_max(q)?;
        }
        let flat = tape.reshape(q, &[self.config.q_channels * self.height * self.width])?;
        let hidden = tape.dense(flat, p.fn_weight, p.fn_bias)?;
        let hidden = tape.relu(hidden)?;
        let logits = tape.dense(hidden, p.out_weight, p.out_bias)?;
        let phi = tape.sigmoid(logits)?;
        Ok(ForwardVars { phi, r, q, v })
    }

    /// Scalar training loss for `g` built on `tape`.
    pub fn loss_on(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        images: &ImageSet,
        g: &ExperienceGraph,
        labels: &[f64],
    ) -> Result<Var> {
        if g.is_empty() {
            return Err(Error::Config("training needs a nonempty graph".into()));
        }
        if labels.len() != g.num_nodes() {
            return Err(Error::Mismatch(format!(
                "{} labels for {} graph nodes",
                labels.len(),
                g.num_nodes()
            )));
        }
        let bound = self.bind(tape, store);
        let states = g.states();
        let mut slot = BTreeMap::new();
        let mut phis = Vec::with_capacity(states.len());
        for (k, &s) in states.iter().enumerate() {
            let obs = images
                .get(&s)
                .ok_or_else(|| Error::Mismatch(format!("no image for state {s}")))?;
            phis.push(self.forward_on(tape, &bound, obs)?.phi);
            slot.insert(s, k);
        }
        let all = tape.concat(&phis)?;
        let x = self.config.q_channels;
        let index: Vec<usize> = g
            .nodes()
            .iter()
            .map(|n| slot[&n.state] * x + n.action.index())
            .collect();
        let per_node = tape.select(all, &index)?;
        let (value, grad) = graph_loss_and_grad(g, labels, tape.value(per_node).data(), self.config.eta)?;
        tape.external_scalar(per_node, value, Tensor::vector(grad))
    }
}

/// Weights plus structure.
#[derive(Clone, Debug)]
pub struct VinNetwork {
    arch: VinArch,
    store: ParamStore,
}

impl VinNetwork {
    /// Randomly initialized network for `height × width` observations.
    /// Every weight and bias is uniform in `±0.5/√fan_in` of its layer.
    pub fn new(config: VinConfig, height: usize, width: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = 1;
        Self::build(config, height, width, |_, shape| {
            if shape.len() > 1 {
                fan_in = shape[1..].iter().product();
            }
            let bound = 0.5 / (fan_in as f64).sqrt();
            Tensor::from_fn(shape, |_| rng.gen_range(-bound..=bound))
        })
    }

    /// Network with every weight zero.
    pub fn zeros(config: VinConfig, height: usize, width: usize) -> Result<Self> {
        Self::build(config, height, width, |_, shape| Tensor::zeros(shape))
    }

    pub(crate) fn build(
        config: VinConfig,
        height: usize,
        width: usize,
        mut init: impl FnMut(&str, &[usize]) -> Tensor,
    ) -> Result<Self> {
        config.validate()?;
        if height == 0 || width == 0 {
            return Err(Error::Config("grid dimensions must be positive".into()));
        }
        let mut store = ParamStore::new();
        let ids: Vec<ParamId> = param_shapes(&config, height, width)
            .into_iter()
            .map(|(name, shape)| {
                let value = init(name, &shape);
                store.add(name, value)
            })
            .collect();
        let ids = Ids {
            h_kernel: ids[0],
            h_bias: ids[1],
            r_kernel: ids[2],
            r_bias: ids[3],
            w_q: ids[4],
            w_v: ids[5],
            fn_weight: ids[6],
            fn_bias: ids[7],
            out_weight: ids[8],
            out_bias: ids[9],
        };
        Ok(Self {
            arch: VinArch {
                config,
                height,
                width,
                ids,
            },
            store,
        })
    }

    pub fn config(&self) -> &VinConfig {
        &self.arch.config
    }

    pub fn arch(&self) -> &VinArch {
        &self.arch
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Structure and mutable weights at once, for gradient checking.
    pub fn split_mut(&mut self) -> (&VinArch, &mut ParamStore) {
        (&self.arch, &mut self.store)
    }

    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .store
            .find(name)
            .ok_or_else(|| Error::Config(format!("no parameter named {name}")))?;
        let p = self.store.get_mut(id);
        if p.value.shape() != value.shape() {
            return Err(shape_err(
                "set_param",
                format!("{name} has shape {:?}, got {:?}", p.value.shape(), value.shape()),
            ));
        }
        p.value = value;
        Ok(())
    }

    pub fn forward(&self, obs: &Tensor) -> Result<ForwardOutput> {
        let mut tape = Tape::new();
        let bound = self.arch.bind(&mut tape, &self.store);
        let vars = self.arch.forward_on(&mut tape, &bound, obs)?;
        let p = tape.value(vars.phi).data();
        Ok(ForwardOutput {
            phi: [p[0], p[1], p[2], p[3]],
            rmap: tape.value(vars.r).clone(),
            qmap: tape.value(vars.q).clone(),
            vmap: tape.value(vars.v).clone(),
        })
    }

    /// `Q = [wQ, wV] ∗ [r; v]`, as a single convolution over the
    /// channel-concatenated reward and value maps.
    pub fn evaluate_q(&self, rmap: &Tensor, vmap: &Tensor) -> Result<Tensor> {
        let (h, w) = (self.arch.height, self.arch.width);
        let r = rmap.reshape(&[1, h, w]).map_err(|_| shape_err("evaluate_q", "rmap must be H×W"))?;
        let v = vmap.reshape(&[1, h, w]).map_err(|_| shape_err("evaluate_q", "vmap must be H×W"))?;
        let mut stacked = r.into_data();
        stacked.extend(v.into_data());
        let input = Tensor::new(vec![2, h, w], stacked)?;
        let wq = &self.store.get(self.arch.ids.w_q).value;
        let wv = &self.store.get(self.arch.ids.w_v).value;
        let (x, k) = (wq.shape()[0], wq.shape()[2]);
        let kernel = Tensor::from_fn(&[x, 2, k, k], |i| {
            let per = k * k;
            let (a, rest) = (i / (2 * per), i % (2 * per));
            let src = if rest < per { wq } else { wv };
            src.data()[a * per + rest % per]
        });
        ops::conv2d(&input, &kernel, None)
    }

    /// One optimizer step on the loss for graph `g`; returns the loss
    /// before the update.
    pub fn train_step(
        &mut self,
        images: &ImageSet,
        g: &ExperienceGraph,
        labels: &[f64],
        optimizer: &mut dyn Optimizer,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let loss = self.arch.loss_on(&mut tape, &self.store, images, g, labels)?;
        self.store.zero_grads();
        tape.backward(loss, &mut self.store)?;
        optimizer.step(&mut self.store)?;
        tape.value(loss).item()
    }

    /// φ(s, a) for one state-action pair.
    pub fn potential(&self, world: &Gridworld, s: StateId, a: Action) -> Result<f64> {
        Ok(self.forward(&world.render(s))?.phi[a.index()])
    }

    /// φ for every state of `world`.
    pub fn potential_table(&self, world: &Gridworld) -> Result<Vec<[f64; 4]>> {
        (0..world.num_states())
            .map(|s| Ok(self.forward(&world.render(s))?.phi))
            .collect()
    }

    /// `γ·φ(s',a') − φ(s,a)`.
    pub fn lookahead_f(
        &self,
        world: &Gridworld,
        (s, a): (StateId, Action),
        (s_next, a_next): (StateId, Action),
        gamma: f64,
    ) -> Result<f64> {
        Ok(lookahead_f(
            gamma,
            self.potential(world, s, a)?,
            self.potential(world, s_next, a_next)?,
        ))
    }
}

/// Look-ahead shaping term `γ·φ_next − φ_current`.
pub fn lookahead_f(gamma: f64, phi_current: f64, phi_next: f64) -> f64 {
    gamma * phi_next - phi_current
}
