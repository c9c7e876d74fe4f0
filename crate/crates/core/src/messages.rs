//! Forward/backward optimality messages over an experience graph, the
//! labels derived from them, and the two-term potential training loss.
//!
//! Trajectories enter the graph at episode-start nodes and leave it after
//! episode-end nodes. Branching is weighted uniformly over the observed
//! alternatives, counting "enter here" and "stop here" as alternatives:
//!
//! * `β(i) = p_i · mean({β(j) : i→j} ∪ {1 if a trajectory stopped at i})`
//! * `m(i) = mean({p_j·m(j) : j→i} ∪ {1 if a trajectory started at i})`,
//!   `α(i) = m(i)/n`
//!
//! where `p_i = exp((r_i − ceiling)/τ)`.

use crate::error::{shape_err, Error, Result};
use crate::graph::{ExperienceGraph, NodeId};

pub const LABEL_FLOOR: f64 = 1e-3;

/// Maps rewards to probabilities that a step lies on an optimal trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimalityModel {
    pub temperature: f64,
    pub reward_ceiling: f64,
}

impl OptimalityModel {
    pub fn new(temperature: f64, reward_ceiling: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self {
            temperature,
            reward_ceiling,
        })
    }

    /// Ceiling set to the largest reward stored in `g`.
    pub fn from_graph(g: &ExperienceGraph, temperature: f64) -> Result<Self> {
        let ceiling = (0..g.num_nodes())
            .map(|i| g.reward_or_step(i))
            .fold(f64::NEG_INFINITY, f64::max);
        if !ceiling.is_finite() {
            return Err(Error::Config("graph has no nodes".into()));
        }
        Self::new(temperature, ceiling)
    }

    /// Raises the ceiling if `r` exceeds it.
    pub fn observe(&mut self, r: f64) {
        if r > self.reward_ceiling {
            self.reward_ceiling = r;
        }
    }

    pub fn prob(&self, r: f64) -> f64 {
        ((r - self.reward_ceiling) / self.temperature).exp()
    }

    pub fn node_probs(&self, g: &ExperienceGraph) -> Vec<f64> {
        (0..g.num_nodes()).map(|i| self.prob(g.reward_or_step(i))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub damping: f64,
    /// Stop once the largest change is below `tol` times the largest message.
    pub tol: f64,
    /// Iteration cap; `None` uses `max(10·n, 2000)`.
    pub max_iters: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-14,
            max_iters: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MessageTable {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub label: Vec<f64>,
}

const STALL_ITERS: usize = 100;
const STALL_TOL: f64 = 1e-12;

fn damped_fixed_point(
    what: &'static str,
    n: usize,
    opts: &SolverOptions,
    update: impl Fn(&[f64], &mut [f64]),
) -> Result<Vec<f64>> {
    let max_iters = opts.max_iters.unwrap_or((10 * n).max(2000));
    let mut x = vec![1.0; n];
    let mut fresh = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    for _ in 0..max_iters {
        update(&x, &mut fresh);
        let mut delta: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (old, &new) in x.iter_mut().zip(&fresh) {
            let next = (1.0 - opts.damping) * *old + opts.damping * new;
            delta = delta.max((next - *old).abs());
            scale = scale.max(next.abs());
            *old = next;
        }
        residual = delta;
        let scale = scale.max(f64::MIN_POSITIVE);
        if delta <= opts.tol * scale {
            return Ok(x);
        }
        if delta < best {
            best = delta;
            since_best = 0;
        } else {
            since_best += 1;
        }
        // Rounding floor: the change has stopped shrinking.
        if since_best >= STALL_ITERS && best <= STALL_TOL * scale {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence {
        what,
        iterations: max_iters,
        residual,
    })
}

fn require_nonempty(g: &ExperienceGraph) -> Result<()> {
    if g.is_empty() {
        Err(Error::Config("message passing needs a nonempty graph".into()))
    } else {
        Ok(())
    }
}

pub fn backward_messages(
    g: &ExperienceGraph,
    model: &OptimalityModel,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    require_nonempty(g)?;
    let p = model.node_probs(g);
    let succ = g.successors();
    let ends = g.episode_ends();
    damped_fixed_point("backward messages", g.num_nodes(), opts, |beta, out| {
        for i in 0..beta.len() {
            let mut sum: f64 = succ[i].iter().map(|&j| beta[j]).sum();
            let mut count = succ[i].len();
            if ends[i] {
                sum += 1.0;
                count += 1;
            }
            out[i] = p[i] * sum / count as f64;
        }
    })
}

pub fn forward_messages(
    g: &ExperienceGraph,
    model: &OptimalityModel,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    require_nonempty(g)?;
    let p = model.node_probs(g);
    let pred = g.predecessors();
    let mut starts = g.episode_starts();
    for (s, preds) in starts.iter_mut().zip(&pred) {
        *s |= preds.is_empty();
    }
    let prefix = damped_fixed_point("forward messages", g.num_nodes(), opts, |m, out| {
        for i in 0..m.len() {
            let mut sum: f64 = pred[i].iter().map(|&j| p[j] * m[j]).sum();
            let mut count = pred[i].len();
            if starts[i] {
                sum += 1.0;
                count += 1;
            }
            out[i] = sum / count as f64;
        }
    })?;
    let prior = 1.0 / g.num_nodes() as f64;
    Ok(prefix.into_iter().map(|m| prior * m).collect())
}

/// Min-max normalization onto `[LABEL_FLOOR, 1]`.
///
/// Inputs whose spread is within rounding of their magnitude carry no
/// ranking information and all map to 1.
pub fn normalize_labels(products: &[f64]) -> Vec<f64> {
    let lo = products.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = products.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > 1e-9 * hi.abs()) {
        return vec![1.0; products.len()];
    }
    products
        .iter()
        .map(|&x| LABEL_FLOOR + (1.0 - LABEL_FLOOR) * (x - lo) / (hi - lo))
        .collect()
}

pub fn message_labels(g: &ExperienceGraph, model: &OptimalityModel) -> Result<MessageTable> {
    message_labels_with(g, model, &SolverOptions::default())
}

pub fn message_labels_with(
    g: &ExperienceGraph,
    model: &OptimalityModel,
    opts: &SolverOptions,
) -> Result<MessageTable> {
    let alpha = forward_messages(g, model, opts)?;
    let beta = backward_messages(g, model, opts)?;
    let prod: Vec<f64> = alpha.iter().zip(&beta).map(|(a, b)| a * b).collect();
    Ok(MessageTable {
        label: normalize_labels(&prod),
        alpha,
        beta,
    })
}

fn check_probs(phi: &[f64]) -> Result<()> {
    if let Some((i, v)) = phi.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v < 1.0)) {
        return Err(Error::Mismatch(format!("prediction {i} = {v} is outside (0, 1)")));
    }
    Ok(())
}

/// Mean binary cross-entropy over the rewarding nodes; 0 if there are none.
pub fn base_loss(labels: &[f64], phi: &[f64], rewarding: &[NodeId]) -> Result<f64> {
    Ok(base_loss_and_grad(labels, phi, rewarding)?.0)
}

pub fn base_loss_and_grad(labels: &[f64], phi: &[f64], rewarding: &[NodeId]) -> Result<(f64, Vec<f64>)> {
    if labels.len() != phi.len() {
        return Err(shape_err("base_loss", format!("{} labels vs {} predictions", labels.len(), phi.len())));
    }
    check_probs(phi)?;
    let mut grad = vec![0.0; phi.len()];
    if rewarding.is_empty() {
        return Ok((0.0, grad));
    }
    let k = rewarding.len() as f64;
    let mut loss = 0.0;
    for &i in rewarding {
        let (y, f) = (labels[i], phi[i]);
        loss -= y * f.ln() + (1.0 - y) * (1.0 - f).ln();
        grad[i] += (-y / f + (1.0 - y) / (1.0 - f)) / k;
    }
    Ok((loss / k, grad))
}

/// `Σ_i Σ_j A[i][j]·(φ_i − φ_j)²`.
pub fn recursive_loss(phi: &[f64], adjacency: &[Vec<f64>]) -> Result<f64> {
    Ok(recursive_loss_and_grad(phi, adjacency)?.0)
}

pub fn recursive_loss_and_grad(phi: &[f64], adjacency: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let n = phi.len();
    if adjacency.len() != n || adjacency.iter().any(|row| row.len() != n) {
        return Err(shape_err("recursive_loss", format!("adjacency must be {n}×{n}")));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let a = adjacency[i][j];
            if a != 0.0 {
                let d = phi[i] - phi[j];
                loss += a * d * d;
                grad[i] += 2.0 * a * d;
                grad[j] -= 2.0 * a * d;
            }
        }
    }
    Ok((loss, grad))
}

pub fn total_loss(base: f64, rec: f64, eta: f64) -> f64 {
    base + eta * rec
}

/// Value and gradient (w.r.t. φ) of `base + η·rec` for graph `g`.
pub fn graph_loss_and_grad(
    g: &ExperienceGraph,
    labels: &[f64],
    phi: &[f64],
    eta: f64,
) -> Result<(f64, Vec<f64>)> {
    let (b, gb) = base_loss_and_grad(labels, phi, &g.rewarding_nodes())?;
    let (r, gr) = recursive_loss_and_grad(phi, &g.adjacency())?;
    let grad = gb.iter().zip(&gr).map(|(x, y)| x + eta * y).collect();
    Ok((total_loss(b, r, eta), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Action::*;

    fn chain(rewards: [f64; 3]) -> ExperienceGraph {
        let mut g = ExperienceGraph::new(-0.01);
        g.add_transition(0, Right, rewards[0], 1, Right);
        g.add_transition(1, Right, rewards[1], 2, Right);
        g.add_terminal(2, Right, rewards[2]);
        g
    }

    #[test]
    fn optimality_prob_values() {
        let m = OptimalityModel::new(1.0, 1.0).unwrap();
        assert_eq!(m.prob(1.0), 1.0);
        assert!((m.prob(0.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((m.prob(-0.01) - (-1.01f64).exp()).abs() < 1e-15);
        assert!(OptimalityModel::new(0.0, 1.0).is_err());
    }

    #[test]
    fn single_terminal_node() {
        let mut g = ExperienceGraph::new(-0.01);
        g.add_terminal(0, Up, 1.0);
        let m = OptimalityModel::from_graph(&g, 1.0).unwrap();
        let t = message_labels(&g, &m).unwrap();
        assert!((t.beta[0] - 1.0).abs() < 1e-12);
        assert!((t.alpha[0] - 1.0).abs() < 1e-12);
        assert_eq!(t.label, vec![1.0]);
    }

    #[test]
    fn chain_messages_are_suffix_and_prefix_products() {
        let g = chain([-0.01, -0.01, 1.0]);
        let m = OptimalityModel::from_graph(&g, 1.0).unwrap();
        let p = m.node_probs(&g);
        let opts = SolverOptions::default();
        let beta = backward_messages(&g, &m, &opts).unwrap();
        let alpha = forward_messages(&g, &m, &opts).unwrap();
        let c = 1.0 / 3.0;
        let eb = [p[0] * p[1] * p[2], p[1] * p[2], p[2]];
        let ea = [c, c * p[0], c * p[0] * p[1]];
        for i in 0..3 {
            assert!((beta[i] - eb[i]).abs() < 1e-12);
            assert!((alpha[i] - ea[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn branch_averages_successors() {
        let mut g = ExperienceGraph::new(-0.01);
        g.add_transition(0, Up, -0.01, 1, Up);
        g.add_terminal(1, Up, 1.0);
        g.add_transition(0, Up, -0.01, 2, Down);
        g.add_terminal(2, Down, -1.0);
        let m = OptimalityModel::from_graph(&g, 1.0).unwrap();
        let p = m.node_probs(&g);
        let t = message_labels(&g, &m).unwrap();
        assert!((t.beta[0] - p[0] * (p[1] + p[2]) / 2.0).abs() < 1e-12);
        assert!(t.label[2] < t.label[1]);
    }

    #[test]
    fn base_loss_cases() {
        assert!(base_loss(&[1.0], &[1.0 - 1e-9], &[0]).unwrap() < 1e-8);
        let e = (-1.0f64).exp();
        assert!((base_loss(&[1.0], &[e], &[0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(base_loss(&[0.3], &[0.4], &[]).unwrap(), 0.0);
        assert!(base_loss(&[1.0], &[1.0], &[0]).is_err());
    }

    #[test]
    fn recursive_loss_cases() {
        let adj = vec![vec![0.0, 1.0], vec![0.0, 0.0]];
        assert!((recursive_loss(&[0.2, 0.7], &adj).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(recursive_loss(&[0.4, 0.4], &adj).unwrap(), 0.0);
        assert_eq!(total_loss(0.0, 0.25, 10.0), 2.5);
        assert_eq!(total_loss(0.7, 0.25, 0.0), 0.7);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut g = ExperienceGraph::new(-0.01);
        g.add_transition(0, Up, -0.01, 1, Up);
        g.add_transition(1, Up, -1.0, 2, Left);
        g.add_transition(2, Left, -0.01, 1, Up);
        g.add_transition(1, Up, -1.0, 3, Right);
        g.add_terminal(3, Right, 1.0);
        let labels = [0.2, 0.5, 0.9, 0.7];
        let phi = [0.3, 0.6, 0.45, 0.8];
        let (_, grad) = graph_loss_and_grad(&g, &labels, &phi, 10.0).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let (mut up, mut dn) = (phi, phi);
            up[i] += h;
            dn[i] -= h;
            let fd = (graph_loss_and_grad(&g, &labels, &up, 10.0).unwrap().0
                - graph_loss_and_grad(&g, &labels, &dn, 10.0).unwrap().0)
                / (2.0 * h);
            assert!((grad[i] - fd).abs() / fd.abs().max(1e-8) < 1e-6);
        }
    }
}
