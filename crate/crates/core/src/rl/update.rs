use super::tables::{CriticTable, PolicyTable};
use crate::env::{Action, StateId};
use crate::error::{Error, Result};

/// One executed step. `next_action` is the action chosen in `next`; it is
/// `None` when `next` is terminal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub state: StateId,
    pub action: Action,
    pub reward: f64,
    pub next: StateId,
    pub next_action: Option<Action>,
    pub terminal: bool,
}

pub type Trajectory = Vec<Transition>;

/// Per-(state, action) potential, or none at all.
#[derive(Clone, Copy, Debug)]
pub enum Potential<'a> {
    Off,
    Table(&'a [[f64; 4]]),
}

impl Potential<'_> {
    pub fn phi(&self, s: StateId, a: Action) -> f64 {
        match self {
            Potential::Off => 0.0,
            Potential::Table(t) => t[s][a.index()],
        }
    }
}

/// `r + γ·φ(s',a') − φ(s,a)`, with `φ(s',a') = 0` when the step is terminal.
pub fn shaped_reward(t: &Transition, potential: Potential<'_>, gamma: f64) -> f64 {
    if let Potential::Off = potential {
        return t.reward;
    }
    let next = match (t.terminal, t.next_action) {
        (false, Some(a)) => potential.phi(t.next, a),
        _ => 0.0,
    };
    t.reward + (gamma * next - potential.phi(t.state, t.action))
}

/// λ-returns `G_t = r_t + γ·[(1−λ)·V(s_{t+1}) + λ·G_{t+1}]`, bootstrapping
/// the final step from `V(s_T)` unless it is terminal.
pub fn lambda_returns(traj: &[Transition], rewards: &[f64], v: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let mut out = vec![0.0; traj.len()];
    let mut next_g = 0.0;
    for t in (0..traj.len()).rev() {
        let tr = &traj[t];
        let v_next = if tr.terminal { 0.0 } else { v[tr.next] };
        let g = if t + 1 == traj.len() {
            rewards[t] + gamma * v_next
        } else {
            rewards[t] + gamma * ((1.0 - lambda) * v_next + lambda * next_g)
        };
        out[t] = g;
        next_g = g;
    }
    out
}

/// Learning rates and mixing weight for [`episode_update`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateParams {
    pub gamma: f64,
    pub alpha_mix: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
}

/// Per-step quantities computed by [`episode_update`].
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateStats {
    pub returns: Vec<f64>,
    pub shaped_returns: Vec<f64>,
    pub q_comb: Vec<f64>,
    pub advantages: Vec<f64>,
    pub actor_grad_norm: f64,
    pub critic_loss: f64,
}

/// Actor-critic update for one finished trajectory.
///
/// Returns, mixed values and advantages all use the critic as it was
/// before the episode. Updates are then applied in time order; each actor
/// step uses the policy as already updated by earlier steps.
pub fn episode_update(
    policy: &mut PolicyTable,
    critic: &mut CriticTable,
    traj: &[Transition],
    potential: Potential<'_>,
    p: &UpdateParams,
) -> Result<UpdateStats> {
    let rewards: Vec<f64> = traj.iter().map(|t| t.reward).collect();
    let shaped: Vec<f64> = traj.iter().map(|t| shaped_reward(t, potential, p.gamma)).collect();
    let g = lambda_returns(traj, &rewards, &critic.v, p.gamma, critic.lambda);
    let gs = lambda_returns(traj, &shaped, &critic.v, p.gamma, critic.lambda);
    let q_comb: Vec<f64> = g
        .iter()
        .zip(&gs)
        .map(|(a, b)| p.alpha_mix * a + (1.0 - p.alpha_mix) * b)
        .collect();
    let v_old = critic.v.clone();
    let advantages: Vec<f64> = traj.iter().zip(&q_comb).map(|(t, q)| q - v_old[t.state]).collect();
    for (t, ((a, b), c)) in g.iter().zip(&gs).zip(&advantages).enumerate() {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::NonFinite(format!("return at step {t}")));
        }
    }

    let mut grad_sq = 0.0;
    let mut critic_loss = 0.0;
    for (t, tr) in traj.iter().enumerate() {
        let pi = policy.softmax(tr.state);
        let adv = advantages[t];
        let theta = &mut policy.theta[tr.state];
        for a in 0..Action::COUNT {
            let indicator = if a == tr.action.index() { 1.0 } else { 0.0 };
            let step = adv * (indicator - pi[a]);
            theta[a] += p.actor_lr * step;
            grad_sq += step * step;
        }
        let err = g[t] - v_old[tr.state];
        critic_loss += err * err;
        let v = &mut critic.v[tr.state];
        *v += p.critic_lr * (g[t] - *v);
    }
    Ok(UpdateStats {
        returns: g,
        shaped_returns: gs,
        q_comb,
        advantages,
        actor_grad_norm: grad_sq.sqrt(),
        critic_loss: critic_loss / traj.len().max(1) as f64,
    })
}
