use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vinrs_core::env::{
    argmax_set, four_rooms, four_rooms_traps, parse_map, write_map, Action, Episode, Gridworld, TabularMdp,
};

const TIE: f64 = 1e-9;

/// Move by the action's delta unless the target is outside or a wall.
fn oracle_next(world: &Gridworld, s: usize, a: Action) -> usize {
    let (r, c) = world.cell_of(s);
    let (dr, dc) = match a {
        Action::Up => (-1, 0),
        Action::Down => (1, 0),
        Action::Left => (0, -1),
        Action::Right => (0, 1),
    };
    let (nr, nc) = (r as isize + dr, c as isize + dc);
    if nr < 0 || nc < 0 || nr >= world.height() as isize || nc >= world.width() as isize {
        return s;
    }
    let cell = (nr as usize, nc as usize);
    if world.is_wall(cell) {
        s
    } else {
        world.state_of(cell).unwrap()
    }
}

fn tie_sets(q: &[[f64; 4]], mdp: &TabularMdp) -> Vec<(usize, u8)> {
    mdp.decision_states().map(|s| (s, argmax_set(&q[s], TIE))).collect()
}

#[test]
fn transitions_match_oracle() {
    for world in [four_rooms(), four_rooms_traps(8, -1.0, 7).unwrap()] {
        for s in 0..world.num_states() {
            for a in Action::ALL {
                let step = world.step(s, a);
                let next = oracle_next(&world, s, a);
                assert_eq!(step.next, next, "state {s} action {a}");
                let cell = world.cell_of(next);
                let expect = if cell == world.goal() {
                    world.goal_reward()
                } else {
                    world.traps().get(&cell).copied().unwrap_or(world.step_reward())
                };
                assert_eq!(step.reward, expect);
                assert_eq!(step.done, cell == world.goal());
            }
        }
    }
}

#[test]
fn render_marks_walls_goal_traps_and_agent() {
    let world = four_rooms_traps(8, -1.0, 7).unwrap();
    let s = world.start_state();
    let obs = world.render(s);
    assert_eq!(obs.shape(), [3, world.height(), world.width()]);
    for r in 0..world.height() {
        for c in 0..world.width() {
            assert_eq!(obs.get(&[0, r, c]), world.is_wall((r, c)) as u8 as f64);
            let agent = world.state_of((r, c)) == Some(s);
            assert_eq!(obs.get(&[2, r, c]), agent as u8 as f64);
            let mark = if (r, c) == world.goal() {
                1.0
            } else if world.traps().contains_key(&(r, c)) {
                -1.0
            } else {
                0.0
            };
            assert_eq!(obs.get(&[1, r, c]), mark);
        }
    }
}

#[test]
fn traps_world_round_trips_through_map_text() {
    let world = four_rooms_traps(8, -1.0, 7).unwrap();
    let back = parse_map(&write_map(&world).unwrap()).unwrap();
    assert_eq!(back.traps(), world.traps());
    assert_eq!(back.walls(), world.walls());
    assert_eq!((back.start(), back.goal()), (world.start(), world.goal()));
}

#[test]
fn episode_reaches_goal_along_optimal_actions() {
    let world = four_rooms();
    let mdp = TabularMdp::from_world(&world);
    let q = mdp.solve(1e-12).unwrap();
    let mut ep = Episode::new(&world);
    while !ep.is_done() {
        let s = ep.state();
        let a = (0..4).max_by(|&i, &j| q[s][i].total_cmp(&q[s][j])).unwrap();
        ep.step(Action::ALL[a]).unwrap();
    }
    assert!(world.is_goal(ep.state()));
    assert_eq!(ep.steps(), 20);
}

#[test]
fn shaping_preserves_greedy_tie_sets() {
    for world in [four_rooms(), four_rooms_traps(8, -1.0, 7).unwrap()] {
        let mdp = TabularMdp::from_world(&world);
        let base = tie_sets(&mdp.solve(1e-13).unwrap(), &mdp);
        assert!(base.iter().any(|&(_, m)| m.count_ones() > 1), "fixture has ties");
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let phi_s: Vec<f64> = (0..mdp.num_states()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let shaped = mdp.solve_state_shaped(&phi_s, 1e-13).unwrap();
            assert_eq!(tie_sets(&shaped, &mdp), base);

            let phi_sa: Vec<[f64; 4]> = (0..mdp.num_states())
                .map(|_| [(); 4].map(|_| rng.gen_range(-1.0..1.0)))
                .collect();
            let q = mdp.solve_lookahead(&phi_sa, 1e-13).unwrap();
            let acting = TabularMdp::lookahead_greedy_values(&q, &phi_sa);
            assert_eq!(tie_sets(&acting, &mdp), base);
        }
    }
}

#[test]
fn raw_lookahead_values_are_not_invariant() {
    let world = four_rooms();
    let mdp = TabularMdp::from_world(&world);
    let base = tie_sets(&mdp.solve(1e-13).unwrap(), &mdp);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phi: Vec<[f64; 4]> = (0..mdp.num_states())
        .map(|_| [(); 4].map(|_| rng.gen_range(-1.0..1.0)))
        .collect();
    let q = mdp.solve_lookahead(&phi, 1e-13).unwrap();
    assert_ne!(tie_sets(&q, &mdp), base);
}
