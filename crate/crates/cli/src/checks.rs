use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vinrs_core::env::{
    argmax_set, corridor, exact_value_iteration, four_rooms, four_rooms_with, two_rooms, Gridworld, TabularMdp,
    WorldParams,
};
use vinrs_core::messages::{message_labels, OptimalityModel};
use vinrs_core::numcore::{grad_check_with, ops, Tensor};
use vinrs_core::oracle::{
    bfs_distances, enumerate_alpha, enumerate_beta, enumerate_labels, naive_channel_max, naive_conv2d, naive_dense,
    random_episode_dag,
};
use vinrs_core::rl::{shaped_reward, train, train_logged, Potential, ShapingMode, TrainConfig, Transition};
use vinrs_core::vinrs::{gradient_fixture, hand_wired_planner, planning_world};

use crate::config::ExperimentConfig;
use crate::run::{run, SummaryRow};

pub const PLANNING_TOL: f64 = 1e-6;
pub const MESSAGE_TOL: f64 = 1e-10;
pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_STEP: f64 = 1e-5;
pub const TELESCOPE_TOL: f64 = 1e-10;
pub const TIE_TOL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Failed for a known configuration reason rather than a defect.
    ExpectedFail,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::ExpectedFail => "XFAIL",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, status: Status, detail: String) -> Self {
        Self {
            name: name.to_string(),
            status,
            detail,
        }
    }

    fn verdict(name: &str, ok: bool, detail: String) -> Self {
        Self::new(name, if ok { Status::Pass } else { Status::Fail }, detail)
    }

    fn error(name: &str, err: impl fmt::Display) -> Self {
        Self::new(name, Status::Fail, format!("error: {err}"))
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<5} {}: {}", self.status.label(), self.name, self.detail)
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn inner(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Production conv, channel-max and dense kernels against the naive
/// loops, and their backward passes against the adjoint identity.
pub fn numcore_oracles(cases: usize, seed: u64) -> CheckOutcome {
    const NAME: &str = "numcore oracle suite";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let run = |rng: &mut ChaCha8Rng, worst: &mut f64| -> vinrs_core::Result<()> {
        let (ci, co) = (rng.gen_range(1..5), rng.gen_range(1..5));
        let (h, w) = (rng.gen_range(1..14), rng.gen_range(1..14));
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let x = random_tensor(rng, &[ci, h, w]);
        let kern = random_tensor(rng, &[co, ci, k, k]);
        let bias = random_tensor(rng, &[co]);
        let y = ops::conv2d(&x, &kern, Some(&bias))?;
        *worst = worst.max(y.max_abs_diff(&naive_conv2d(&x, &kern, Some(&bias))));

        let g = random_tensor(rng, &[co, h, w]);
        let y0 = ops::conv2d(&x, &kern, None)?;
        let (gx, gk, _) = ops::conv2d_backward(&x, &kern, &g)?;
        let lhs = inner(&g, &y0);
        let scale = 1.0 + lhs.abs();
        *worst = worst.max((lhs - inner(&gx, &x)).abs() / scale);
        *worst = worst.max((lhs - inner(&gk, &kern)).abs() / scale);

        let (v, arg) = ops::channel_max(&x)?;
        let (nv, narg) = naive_channel_max(&x);
        *worst = worst.max(v.max_abs_diff(&nv));
        if arg != narg {
            *worst = f64::INFINITY;
        }

        let (m, n) = (rng.gen_range(1..10), rng.gen_range(1..40));
        let xd = random_tensor(rng, &[n]);
        let wd = random_tensor(rng, &[m, n]);
        let bd = random_tensor(rng, &[m]);
        *worst = worst.max(ops::dense(&xd, &wd, &bd)?.max_abs_diff(&naive_dense(&xd, &wd, &bd)));
        let gd = random_tensor(rng, &[m]);
        let yd = ops::dense(&xd, &wd, &Tensor::zeros(&[m]))?;
        let (gxd, gwd, _) = ops::dense_backward(&xd, &wd, &gd)?;
        let lhs = inner(&gd, &yd);
        let scale = 1.0 + lhs.abs();
        *worst = worst.max((lhs - inner(&gxd, &xd)).abs() / scale);
        *worst = worst.max((lhs - inner(&gwd, &wd)).abs() / scale);
        Ok(())
    };
    for _ in 0..cases {
        if let Err(e) = run(&mut rng, &mut worst) {
            return CheckOutcome::error(NAME, e);
        }
    }
    CheckOutcome::verdict(NAME, worst < ORACLE_TOL, format!("{cases} random cases, max error {worst:.2e}"))
}

/// Full network loss gradient against central differences on the pinned
/// five-node fixture. `corrupt` names a parameter whose analytic gradient
/// is deliberately perturbed before comparison.
pub fn gradient_check(corrupt: Option<&str>) -> CheckOutcome {
    const NAME: &str = "gradient check";
    let mut fx = gradient_fixture();
    let (arch, store) = fx.net.split_mut();
    let arch = arch.clone();
    let (images, g, labels) = (&fx.images, &fx.graph, &fx.labels);
    let tamper = |name: &str, grad: &mut Tensor| {
        if Some(name) == corrupt {
            for v in grad.data_mut() {
                *v = *v * 1.5 + 1e-3;
            }
        }
    };
    let report = match grad_check_with(|t, s| arch.loss_on(t, s, images, g, labels), store, GRAD_STEP, tamper) {
        Ok(r) => r,
        Err(e) => return CheckOutcome::error(NAME, e),
    };
    let detail = format!(
        "{} elements, max relative error {:.2e} at {}[{}] (analytic {:.6e}, numeric {:.6e})",
        report.checked,
        report.max_rel_error,
        report.worst_param,
        report.worst_index,
        report.worst_analytic,
        report.worst_numeric
    );
    CheckOutcome::verdict(NAME, report.passes(GRAD_TOL), detail)
}

/// Longest shortest-path distance to the goal over free cells.
pub fn diameter(world: &Gridworld) -> usize {
    bfs_distances(&world.open_mask(), world.goal())
        .into_iter()
        .flatten()
        .flatten()
        .max()
        .unwrap_or(0)
}

pub fn planning_maps() -> Vec<(&'static str, Gridworld)> {
    let params = WorldParams::default();
    vec![
        ("corridor", corridor(5, params).expect("valid corridor")),
        ("two_rooms", two_rooms(params)),
        ("four_rooms", four_rooms()),
    ]
}

/// Hand-wired planner values against exact value iteration. `k` defaults
/// to each map's diameter; a mismatch with `k` below the diameter is an
/// expected failure.
pub fn planning(maps: &[(&str, Gridworld)], k: Option<usize>) -> CheckOutcome {
    let name = match k {
        Some(k) => format!("planning equivalence (K={k})"),
        None => "planning equivalence".to_string(),
    };
    let mut status = Status::Pass;
    let mut parts = Vec::new();
    for (label, world) in maps {
        let res = (|| -> vinrs_core::Result<(usize, usize, f64)> {
            let pw = planning_world(world, -1.0)?;
            let d = diameter(&pw);
            let iters = k.unwrap_or(d);
            let exact = exact_value_iteration(&pw, 1e-12)?;
            let net = hand_wired_planner(&pw, iters)?;
            let out = net.forward(&pw.render(pw.start_state()))?;
            let err = (0..pw.num_states())
                .map(|s| {
                    let (r, c) = pw.cell_of(s);
                    (out.vmap.get(&[r, c]) - exact.values[s]).abs()
                })
                .fold(0.0, f64::max);
            Ok((iters, d, err))
        })();
        let (iters, d, err) = match res {
            Ok(v) => v,
            Err(e) => return CheckOutcome::error(&name, format!("{label}: {e}")),
        };
        if err < PLANNING_TOL {
            parts.push(format!("{label} K={iters} max |dV| {err:.1e}"));
        } else if iters < d {
            if status == Status::Pass {
                status = Status::ExpectedFail;
            }
            parts.push(format!(
                "{label} K={iters} max |dV| {err:.3} (insufficient iterations, diameter {d})"
            ));
        } else {
            status = Status::Fail;
            parts.push(format!("{label} K={iters} max |dV| {err:.3e} with K >= diameter {d}"));
        }
    }
    CheckOutcome::new(&name, status, parts.join("; "))
}

/// Fixed-point messages and labels against path enumeration on random
/// acyclic experience graphs.
pub fn message_enumeration(cases: usize, seed: u64) -> CheckOutcome {
    const NAME: &str = "message enumeration";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    for case in 0..cases {
        let g = random_episode_dag(&mut rng, 12, -0.01);
        let res = OptimalityModel::from_graph(&g, 1.0).and_then(|m| Ok((message_labels(&g, &m)?, m.node_probs(&g))));
        let (table, probs) = match res {
            Ok(v) => v,
            Err(e) => return CheckOutcome::error(NAME, format!("graph {case}: {e}")),
        };
        worst = worst
            .max(diff(&table.alpha, &enumerate_alpha(&g, &probs)))
            .max(diff(&table.beta, &enumerate_beta(&g, &probs)))
            .max(diff(&table.label, &enumerate_labels(&g, &probs)));
    }
    CheckOutcome::verdict(
        NAME,
        worst < MESSAGE_TOL,
        format!("{cases} random graphs of at most 12 nodes, max error {worst:.2e}"),
    )
}

fn tie_sets(q: &[[f64; 4]], mdp: &TabularMdp) -> Vec<u8> {
    mdp.decision_states().map(|s| argmax_set(&q[s], TIE_TOL)).collect()
}

/// Greedy tie sets of shaped value iteration against the unshaped MDP for
/// random frozen potentials, both state and look-ahead forms.
pub fn argmax_invariance(world: &Gridworld, tables: usize, seed: u64) -> CheckOutcome {
    const NAME: &str = "shaping argmax invariance";
    let mdp = TabularMdp::from_world(world);
    let n = mdp.num_states();
    let base = match mdp.solve(1e-13) {
        Ok(q) => tie_sets(&q, &mdp),
        Err(e) => return CheckOutcome::error(NAME, e),
    };
    let states: Vec<usize> = mdp.decision_states().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..tables {
        let phi_s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let phi_sa: Vec<[f64; 4]> = (0..n).map(|_| [(); 4].map(|_| rng.gen_range(-1.0..1.0))).collect();
        let res = mdp.solve_state_shaped(&phi_s, 1e-13).and_then(|qs| {
            let ql = mdp.solve_lookahead(&phi_sa, 1e-13)?;
            Ok((tie_sets(&qs, &mdp), tie_sets(&TabularMdp::lookahead_greedy_values(&ql, &phi_sa), &mdp)))
        });
        let (state_sets, look_sets) = match res {
            Ok(v) => v,
            Err(e) => return CheckOutcome::error(NAME, format!("table {t}: {e}")),
        };
        for (form, sets) in [("state", &state_sets), ("look-ahead", &look_sets)] {
            if let Some(i) = (0..base.len()).find(|&i| sets[i] != base[i]) {
                return CheckOutcome::new(
                    NAME,
                    Status::Fail,
                    format!(
                        "table {t}, {form} potential: state {} tie set {:04b} vs unshaped {:04b}",
                        states[i], sets[i], base[i]
                    ),
                );
            }
        }
    }
    CheckOutcome::new(
        NAME,
        Status::Pass,
        format!("{tables} random potentials, {} decision states, state and look-ahead forms", base.len()),
    )
}

/// Undiscounted shaped minus original return against the potential
/// difference between the last and first steps, on trajectories logged by
/// a training run.
pub fn telescoping(trajectories: usize, seed: u64) -> CheckOutcome {
    const NAME: &str = "shaping telescopes";
    let world = four_rooms_with(WorldParams {
        max_episode_steps: 300,
        ..WorldParams::default()
    });
    let config = TrainConfig {
        episodes: trajectories,
        ..TrainConfig::default()
    };
    let mut logged: Vec<Vec<Transition>> = Vec::with_capacity(trajectories);
    if let Err(e) = train_logged(&world, &config, seed, |_, t| logged.push(t.to_vec())) {
        return CheckOutcome::error(NAME, e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e1e);
    let (mut worst, mut truncated): (f64, usize) = (0.0, 0);
    for traj in &logged {
        let phi: Vec<[f64; 4]> = (0..world.num_states())
            .map(|_| [(); 4].map(|_| rng.gen_range(-1.0..1.0)))
            .collect();
        let pot = Potential::Table(&phi);
        let orig: f64 = traj.iter().map(|t| t.reward).sum();
        let shaped: f64 = traj.iter().map(|t| shaped_reward(t, pot, 1.0)).sum();
        let (first, last) = (&traj[0], &traj[traj.len() - 1]);
        let end = match (last.terminal, last.next_action) {
            (false, Some(a)) => {
                truncated += 1;
                pot.phi(last.next, a)
            }
            _ => 0.0,
        };
        let expect = end - pot.phi(first.state, first.action);
        worst = worst.max((shaped - orig - expect).abs());
    }
    CheckOutcome::verdict(
        NAME,
        worst < TELESCOPE_TOL && logged.len() == trajectories && truncated > 0 && truncated < trajectories,
        format!(
            "{} logged trajectories ({truncated} truncated), max error {worst:.2e}",
            logged.len()
        ),
    )
}

/// Training with `alpha_mix = 1` in each shaping mode against unshaped
/// training, compared bit for bit on steps and returns.
pub fn degenerate_mix(world: &Gridworld, episodes: usize, seed: u64) -> CheckOutcome {
    const NAME: &str = "degenerate mix";
    let base_cfg = TrainConfig {
        episodes,
        alpha_mix: 1.0,
        ..TrainConfig::default()
    };
    let curve = |mode| {
        let cfg = TrainConfig {
            shaping_mode: mode,
            ..base_cfg.clone()
        };
        train(world, &cfg, seed).map(|m| {
            m.iter()
                .map(|e| (e.steps, e.cumulative_steps, e.return_.to_bits()))
                .collect::<Vec<_>>()
        })
    };
    let base = match curve(ShapingMode::None) {
        Ok(c) => c,
        Err(e) => return CheckOutcome::error(NAME, e),
    };
    let mut parts = Vec::new();
    let mut ok = true;
    for mode in [ShapingMode::ExactMessages, ShapingMode::Cnn] {
        match curve(mode) {
            Ok(c) => {
                let first = c.iter().zip(&base).position(|(a, b)| a != b);
                ok &= first.is_none() && c.len() == base.len();
                match first {
                    None => parts.push(format!("{} identical over {episodes} episodes", mode.name())),
                    Some(i) => parts.push(format!("{} diverges at episode {}", mode.name(), i + 1)),
                }
            }
            Err(e) => return CheckOutcome::error(NAME, format!("{}: {e}", mode.name())),
        }
    }
    CheckOutcome::verdict(NAME, ok, parts.join("; "))
}

/// Runs `config` twice into separate directories under `root` and
/// compares every output file byte for byte.
pub fn determinism(config: &ExperimentConfig, root: &Path) -> CheckOutcome {
    const NAME: &str = "run determinism";
    let mut outputs = Vec::new();
    for sub in ["first", "second"] {
        let cfg = ExperimentConfig {
            output_dir: root.join(sub),
            ..config.clone()
        };
        match run(&cfg, |_| {}) {
            Ok(out) => outputs.push(out.files),
            Err(e) => return CheckOutcome::error(NAME, format!("{e:#}")),
        }
    }
    let mut compared = 0;
    for (a, b) in outputs[0].iter().zip(&outputs[1]) {
        match (std::fs::read(a), std::fs::read(b)) {
            (Ok(x), Ok(y)) if x == y => compared += 1,
            (Ok(_), Ok(_)) => {
                return CheckOutcome::new(NAME, Status::Fail, format!("{} differs between runs", a.display()))
            }
            (Err(e), _) | (_, Err(e)) => return CheckOutcome::error(NAME, e),
        }
    }
    CheckOutcome::verdict(
        NAME,
        compared == outputs[0].len() && outputs[0].len() == outputs[1].len(),
        format!("{compared} files byte-identical"),
    )
}

/// Mean cumulative steps at `episode` per mode from a summary.
pub fn mean_at(summary: &[SummaryRow], mode: ShapingMode, episode: usize) -> Option<f64> {
    summary
        .iter()
        .find(|r| r.mode == mode && r.episode == episode)
        .map(|r| r.mean)
}

/// The learning-speed ordering: both shaped agents at most plain
/// actor-critic, and the CNN agent within 10% of or below exact messages.
pub fn ordering(label: &str, summary: &[SummaryRow], episode: usize) -> CheckOutcome {
    let name = format!("learning-speed ordering ({label})");
    let get = |m| mean_at(summary, m, episode);
    let (Some(a2c), Some(ab), Some(cnn)) = (get(ShapingMode::None), get(ShapingMode::ExactMessages), get(ShapingMode::Cnn))
    else {
        return CheckOutcome::new(&name, Status::Fail, format!("summary lacks episode {episode} for some mode"));
    };
    let ok = cnn <= a2c && ab <= a2c && cnn <= 1.1 * ab;
    CheckOutcome::verdict(
        &name,
        ok,
        format!("mean cumulative steps at {episode}: none {a2c:.1}, exact_messages {ab:.1}, cnn {cnn:.1}"),
    )
}

/// Options for [`selfcheck`].
#[derive(Clone, Debug, Default)]
pub struct SelfcheckOptions {
    /// Parameter whose analytic gradient is corrupted, for fault injection.
    pub corrupt_gradient: Option<String>,
}

/// The self-check sequence. Expected failures do not count as failures.
pub fn selfcheck(opts: &SelfcheckOptions, mut report: impl FnMut(&CheckOutcome)) -> Vec<CheckOutcome> {
    let four = vec![("four_rooms", four_rooms())];
    let mut out = Vec::new();
    let mut push = |o: CheckOutcome| {
        report(&o);
        out.push(o);
    };
    push(numcore_oracles(200, 1));
    push(gradient_check(opts.corrupt_gradient.as_deref()));
    push(planning(&planning_maps(), None));
    push(planning(&four, Some(1)));
    push(message_enumeration(50, 2024));
    push(argmax_invariance(&four[0].1, 20, 11));
    out
}
