use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vinrs_core::env::{four_rooms, four_rooms_traps, four_rooms_with, Action, Episode, Gridworld, WorldParams};
use vinrs_core::rl::{
    episode_update, lambda_returns, shaped_reward, train, train_logged, CriticTable, EpisodeMetrics, PolicyTable,
    Potential, ShapingMode, TrainConfig, Transition, UpdateParams,
};
use vinrs_core::vinrs::VinConfig;
use vinrs_core::Error;

fn step(state: usize, action: Action, reward: f64, next: usize, next_action: Option<Action>) -> Transition {
    Transition {
        state,
        action,
        reward,
        next,
        next_action,
        terminal: next_action.is_none(),
    }
}

fn random_table(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 4]> {
    (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen(), rng.gen()]).collect()
}

fn rollout(world: &Gridworld, policy: &PolicyTable, rng: &mut ChaCha8Rng) -> Vec<Transition> {
    rollout_from(world, world.start_state(), policy, rng)
}

fn rollout_from(world: &Gridworld, start: usize, policy: &PolicyTable, rng: &mut ChaCha8Rng) -> Vec<Transition> {
    let mut ep = Episode::from_state(world, start);
    let mut out = Vec::new();
    let mut a = policy.select_action(ep.state(), rng);
    loop {
        let s = ep.state();
        let st = ep.step(a).unwrap();
        let terminal = st.done && !st.truncated;
        let next_action = (!terminal).then(|| policy.select_action(st.next, rng));
        out.push(Transition {
            state: s,
            action: a,
            reward: st.reward,
            next: st.next,
            next_action,
            terminal,
        });
        if st.done {
            return out;
        }
        a = next_action.unwrap();
    }
}

#[test]
fn shaped_reward_cases() {
    let t = step(0, Action::Up, -0.01, 1, Some(Action::Left));
    assert_eq!(shaped_reward(&t, Potential::Off, 0.99), -0.01);

    let constant = vec![[0.7; 4]; 2];
    assert_eq!(shaped_reward(&t, Potential::Table(&constant), 1.0), -0.01);

    let mut phi = vec![[0.0; 4]; 2];
    phi[0][Action::Up.index()] = 0.5;
    phi[1][Action::Left.index()] = 0.8;
    let f = shaped_reward(&t, Potential::Table(&phi), 0.99);
    assert!((f - (-0.01 + 0.292)).abs() < 1e-12);

    let last = step(1, Action::Left, 1.0, 2, None);
    assert!((shaped_reward(&last, Potential::Table(&phi), 0.99) - 0.2).abs() < 1e-12);
}

#[test]
fn three_step_fixture_matches_hand_recursion() {
    let (gamma, lambda, alpha, lr) = (0.9, 0.8, 0.7, 0.5);
    let traj = vec![
        step(0, Action::Right, -0.01, 1, Some(Action::Down)),
        step(1, Action::Down, -0.5, 2, Some(Action::Right)),
        step(2, Action::Right, 1.0, 3, None),
    ];
    let v = [0.2, 0.4, 0.6, 0.0];
    let mut phi = vec![[0.0; 4]; 4];
    phi[0][3] = 0.3;
    phi[1][1] = 0.6;
    phi[2][3] = 0.9;

    let g2 = 1.0;
    let g1 = -0.5 + gamma * ((1.0 - lambda) * 0.6 + lambda * g2);
    let g0 = -0.01 + gamma * ((1.0 - lambda) * 0.4 + lambda * g1);
    let r0 = -0.01 + gamma * 0.6 - 0.3;
    let r1 = -0.5 + gamma * 0.9 - 0.6;
    let r2 = 1.0 - 0.9;
    let s2 = r2;
    let s1 = r1 + gamma * ((1.0 - lambda) * 0.6 + lambda * s2);
    let s0 = r0 + gamma * ((1.0 - lambda) * 0.4 + lambda * s1);
    let q = [
        alpha * g0 + (1.0 - alpha) * s0,
        alpha * g1 + (1.0 - alpha) * s1,
        alpha * g2 + (1.0 - alpha) * s2,
    ];
    let adv = [q[0] - 0.2, q[1] - 0.4, q[2] - 0.6];

    let mut policy = PolicyTable::new(4, 0.1);
    let mut critic = CriticTable {
        v: v.to_vec(),
        lambda,
    };
    let params = UpdateParams {
        gamma,
        alpha_mix: alpha,
        actor_lr: lr,
        critic_lr: lr,
    };
    let stats = episode_update(&mut policy, &mut critic, &traj, Potential::Table(&phi), &params).unwrap();
    for t in 0..3 {
        assert!((stats.returns[t] - [g0, g1, g2][t]).abs() < 1e-12);
        assert!((stats.shaped_returns[t] - [s0, s1, s2][t]).abs() < 1e-12);
        assert!((stats.q_comb[t] - q[t]).abs() < 1e-12);
        assert!((stats.advantages[t] - adv[t]).abs() < 1e-12);
    }
    // Each state is visited once from a uniform policy.
    for (t, tr) in traj.iter().enumerate() {
        for a in 0..4 {
            let ind = if a == tr.action.index() { 1.0 } else { 0.0 };
            let expect = lr * adv[t] * (ind - 0.25);
            assert!((policy.theta[tr.state][a] - expect).abs() < 1e-12);
        }
        let g = [g0, g1, g2][t];
        assert!((critic.v[tr.state] - (v[tr.state] + lr * (g - v[tr.state]))).abs() < 1e-12);
    }
}

#[test]
fn lambda_one_returns_are_monte_carlo() {
    let traj = vec![
        step(0, Action::Up, 1.0, 1, Some(Action::Up)),
        step(1, Action::Up, 2.0, 2, Some(Action::Up)),
        step(2, Action::Up, 3.0, 3, None),
    ];
    let g = lambda_returns(&traj, &[1.0, 2.0, 3.0], &[9.0; 4], 0.5, 1.0);
    assert_eq!(g, vec![1.0 + 0.5 * (2.0 + 0.5 * 3.0), 2.0 + 0.5 * 3.0, 3.0]);
}

#[test]
fn truncated_final_step_bootstraps() {
    let traj = vec![step(0, Action::Up, -1.0, 1, Some(Action::Down))];
    let g = lambda_returns(&traj, &[-1.0], &[0.0, 4.0], 0.5, 0.9);
    assert_eq!(g, vec![1.0]);
}

#[test]
fn full_mix_ignores_shaping() {
    let world = four_rooms();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let phi = random_table(world.num_states(), &mut rng);
    let params = UpdateParams {
        gamma: 0.99,
        alpha_mix: 1.0,
        actor_lr: 0.1,
        critic_lr: 0.1,
    };
    let mut p1 = PolicyTable::new(world.num_states(), 0.1);
    let mut c1 = CriticTable::new(world.num_states(), 0.95);
    let (mut p2, mut c2) = (p1.clone(), c1.clone());
    for _ in 0..5 {
        let traj = rollout(&world, &p1, &mut rng);
        let a = episode_update(&mut p1, &mut c1, &traj, Potential::Off, &params).unwrap();
        let b = episode_update(&mut p2, &mut c2, &traj, Potential::Table(&phi), &params).unwrap();
        assert_eq!(a.q_comb, b.q_comb);
        assert_eq!(p1, p2);
        assert_eq!(c1, c2);
    }
}

#[test]
fn zero_advantage_leaves_policy_unchanged() {
    let traj = vec![step(0, Action::Left, 0.3, 1, None)];
    let mut policy = PolicyTable::new(2, 0.1);
    policy.theta[0] = [0.1, -0.2, 0.3, 0.0];
    let before = policy.clone();
    let mut critic = CriticTable {
        v: vec![0.3, 0.0],
        lambda: 0.95,
    };
    let params = UpdateParams {
        gamma: 0.99,
        alpha_mix: 1.0,
        actor_lr: 0.1,
        critic_lr: 0.1,
    };
    let stats = episode_update(&mut policy, &mut critic, &traj, Potential::Off, &params).unwrap();
    assert_eq!(stats.advantages, vec![0.0]);
    assert_eq!(stats.actor_grad_norm, 0.0);
    assert_eq!(policy, before);
}

#[test]
fn non_finite_return_names_step() {
    let traj = vec![
        step(0, Action::Up, 0.0, 1, Some(Action::Up)),
        step(1, Action::Up, f64::NAN, 2, None),
    ];
    let mut policy = PolicyTable::new(3, 0.1);
    let mut critic = CriticTable::new(3, 0.95);
    let params = UpdateParams {
        gamma: 0.99,
        alpha_mix: 0.9,
        actor_lr: 0.1,
        critic_lr: 0.1,
    };
    match episode_update(&mut policy, &mut critic, &traj, Potential::Off, &params) {
        Err(Error::NonFinite(msg)) => assert!(msg.contains("step 0") || msg.contains("step 1"), "{msg}"),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}

#[test]
fn policy_stays_normalized_through_updates() {
    let world = four_rooms();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let phi = random_table(world.num_states(), &mut rng);
    let mut policy = PolicyTable::new(world.num_states(), 0.1);
    let mut critic = CriticTable::new(world.num_states(), 0.95);
    let params = UpdateParams {
        gamma: 0.99,
        alpha_mix: 0.5,
        actor_lr: 0.5,
        critic_lr: 0.1,
    };
    for _ in 0..20 {
        let traj = rollout(&world, &policy, &mut rng);
        episode_update(&mut policy, &mut critic, &traj, Potential::Table(&phi), &params).unwrap();
        for s in 0..world.num_states() {
            assert!((policy.softmax(s).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((policy.probs(s).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn undiscounted_shaping_telescopes() {
    let world = four_rooms_with(WorldParams {
        gamma: 1.0,
        max_episode_steps: 60,
        ..WorldParams::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let policy = PolicyTable::new(world.num_states(), 0.1);
    let (mut truncated, mut finished) = (0, 0);
    for _ in 0..100 {
        let phi = random_table(world.num_states(), &mut rng);
        let pot = Potential::Table(&phi);
        let start = loop {
            let s = rng.gen_range(0..world.num_states());
            if !world.is_goal(s) {
                break s;
            }
        };
        let traj = rollout_from(&world, start, &policy, &mut rng);
        let orig: f64 = traj.iter().map(|t| t.reward).sum();
        let shaped: f64 = traj.iter().map(|t| shaped_reward(t, pot, 1.0)).sum();
        let first = &traj[0];
        let last = traj.last().unwrap();
        let end = match last.next_action {
            Some(a) => {
                truncated += 1;
                pot.phi(last.next, a)
            }
            None => {
                finished += 1;
                0.0
            }
        };
        let expect = end - pot.phi(first.state, first.action);
        assert!((shaped - orig - expect).abs() < 1e-10);
    }
    assert!(truncated > 0 && finished > 0);
}

fn short_config(mode: ShapingMode, episodes: usize) -> TrainConfig {
    TrainConfig {
        episodes,
        shaping_mode: mode,
        vin: VinConfig {
            k_iterations: 4,
            hidden_units: 8,
            ..VinConfig::default()
        },
        k_train: 2,
        ..TrainConfig::default()
    }
}

fn assert_well_formed(m: &[EpisodeMetrics], episodes: usize) {
    assert_eq!(m.len(), episodes);
    let mut total = 0;
    for (i, r) in m.iter().enumerate() {
        assert_eq!(r.episode, i + 1);
        assert!(r.steps > 0);
        total += r.steps;
        assert_eq!(r.cumulative_steps, total);
    }
}

#[test]
fn metrics_are_monotone_for_every_mode() {
    let world = four_rooms();
    for mode in ShapingMode::ALL {
        let cfg = short_config(mode, 25);
        let m = train(&world, &cfg, 2).unwrap();
        assert_well_formed(&m, 25);
        let trained: Vec<usize> = m.iter().filter(|r| r.cnn_loss.is_some()).map(|r| r.episode).collect();
        match mode {
            ShapingMode::Cnn => assert_eq!(trained, vec![10, 20]),
            _ => assert!(trained.is_empty()),
        }
        if mode == ShapingMode::None {
            assert!(m.iter().all(|r| r.shaped_return == r.return_));
        }
    }
}

#[test]
fn training_is_deterministic() {
    let world = four_rooms_traps(8, -1.0, 7).unwrap();
    for mode in ShapingMode::ALL {
        let cfg = short_config(mode, 15);
        assert_eq!(train(&world, &cfg, 4).unwrap(), train(&world, &cfg, 4).unwrap());
    }
}

#[test]
fn full_mix_training_matches_unshaped() {
    let world = four_rooms();
    let plain = train(&world, &short_config(ShapingMode::None, 60), 8).unwrap();
    for mode in [ShapingMode::ExactMessages, ShapingMode::Cnn] {
        let cfg = TrainConfig {
            alpha_mix: 1.0,
            ..short_config(mode, 60)
        };
        let m = train(&world, &cfg, 8).unwrap();
        for (a, b) in plain.iter().zip(&m) {
            assert_eq!((a.episode, a.steps, a.cumulative_steps), (b.episode, b.steps, b.cumulative_steps));
            assert_eq!(a.return_.to_bits(), b.return_.to_bits());
        }
    }
}

#[test]
fn logged_trajectories_match_metrics() {
    let world = four_rooms();
    let cfg = short_config(ShapingMode::ExactMessages, 12);
    let mut seen = 0;
    train_logged(&world, &cfg, 6, |m, traj| {
        seen += 1;
        assert_eq!(m.steps, traj.len());
        let r: f64 = traj.iter().map(|t| t.reward).sum();
        assert_eq!(r, m.return_);
        assert_eq!(traj[0].state, world.start_state());
        for w in traj.windows(2) {
            assert_eq!(w[0].next, w[1].state);
            assert_eq!(w[0].next_action, Some(w[1].action));
        }
    })
    .unwrap();
    assert_eq!(seen, 12);
}

#[test]
fn invalid_config_is_rejected() {
    let world = four_rooms();
    for cfg in [
        TrainConfig {
            alpha_mix: 1.5,
            ..TrainConfig::default()
        },
        TrainConfig {
            gamma: 0.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            temperature: -1.0,
            ..TrainConfig::default()
        },
    ] {
        assert!(matches!(train(&world, &cfg, 1), Err(Error::Config(_))));
    }
}

#[test]
fn plain_actor_critic_learns_four_rooms() {
    let world = four_rooms();
    let cfg = TrainConfig::default();
    let m = train(&world, &cfg, 1).unwrap();
    let tail: f64 = m[450..].iter().map(|r| r.steps as f64).sum::<f64>() / 50.0;
    assert!(tail < 50.0, "final 50-episode mean {tail}");
}
