//! Fixed weights that turn the network into an exact value-iteration
//! planner for a known gridworld.
//!
//! The reward map is built in cost-to-go form: free cells cost the step
//! reward, the goal and the walls touching it are zero, every other wall
//! is a large negative constant. Zero-valued walls next to the goal keep
//! the goal's value pinned at 0 without a dedicated absorbing channel.

use super::network::{VinConfig, VinNetwork};
use crate::env::{Action, Gridworld, WorldParams};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const WALL_COST: f64 = 1e3;

/// The same layout with zero goal reward, no traps and the given step
/// reward, which is the reward model the wired planner reproduces.
pub fn planning_world(world: &Gridworld, step_reward: f64) -> Result<Gridworld> {
    if !(step_reward < 0.0) {
        return Err(Error::Config("planning check needs a negative step reward".into()));
    }
    let params = WorldParams {
        goal_reward: 0.0,
        step_reward,
        ..world.params()
    };
    Gridworld::new(
        world.width(),
        world.height(),
        world.walls().to_vec(),
        world.start(),
        world.goal(),
        Default::default(),
        params,
    )
}

fn check_layout(world: &Gridworld) -> Result<()> {
    let (h, w) = (world.height() as isize, world.width() as isize);
    let (gr, gc) = (world.goal().0 as isize, world.goal().1 as isize);
    let nbrs = |r: isize, c: isize| [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)];
    let inside = |(r, c): (isize, isize)| r >= 0 && c >= 0 && r < h && c < w;
    let wall = |(r, c): (isize, isize)| world.is_wall((r as usize, c as usize));
    let mut zero_cells = 0;
    for cell in nbrs(gr, gc).into_iter().filter(|&c| inside(c) && wall(c)) {
        zero_cells += 1;
        let other_free = nbrs(cell.0, cell.1)
            .into_iter()
            .any(|n| inside(n) && !wall(n) && n != (gr, gc));
        if other_free {
            return Err(Error::Config(format!(
                "wall {cell:?} next to the goal also touches another free cell"
            )));
        }
    }
    if zero_cells == 0 {
        return Err(Error::Config("the goal needs at least one adjacent wall".into()));
    }
    let border_free = (0..h).any(|r| (0..w).any(|c| (r == 0 || c == 0 || r == h - 1 || c == w - 1) && !wall((r, c))));
    if border_free {
        return Err(Error::Config("the layout must be enclosed by walls".into()));
    }
    Ok(())
}

/// A network whose value map after `k_iterations` refinements equals the
/// exact values of [`planning_world`] wherever the goal is within reach.
pub fn hand_wired_planner(world: &Gridworld, k_iterations: usize) -> Result<VinNetwork> {
    check_layout(world)?;
    let gamma = world.gamma();
    let step = world.step_reward();
    let config = VinConfig {
        k_iterations,
        h_channels: 4,
        kernel_size: 3,
        hidden_units: 1,
        ..VinConfig::default()
    };
    let mut net = VinNetwork::zeros(config, world.height(), world.width())?;

    // Features: wall, wall touching the goal, goal, free.
    let mut hk = Tensor::zeros(&[4, 3, 3, 3]);
    hk.set(&[0, 0, 1, 1], 1.0);
    hk.set(&[1, 0, 1, 1], 1.0);
    for (u, v) in [(0, 1), (2, 1), (1, 0), (1, 2)] {
        hk.set(&[1, 1, u, v], 1.0);
    }
    hk.set(&[2, 1, 1, 1], 1.0);
    hk.set(&[3, 0, 1, 1], -1.0);
    net.set_param("cnn_h.kernel", hk)?;
    net.set_param("cnn_h.bias", Tensor::vector(vec![0.0, -1.0, 0.0, 1.0]))?;

    let rk = Tensor::new(vec![1, 4, 1, 1], vec![-WALL_COST, WALL_COST, -step, step])?;
    net.set_param("cnn_r.kernel", rk)?;

    let mut wq = Tensor::zeros(&[4, 1, 3, 3]);
    let mut wv = Tensor::zeros(&[4, 1, 3, 3]);
    for a in Action::ALL {
        let (dr, dc) = a.delta();
        wq.set(&[a.index(), 0, 1, 1], 1.0);
        wv.set(&[a.index(), 0, (1 + dr) as usize, (1 + dc) as usize], gamma);
    }
    net.set_param("w_q", wq)?;
    net.set_param("w_v", wv)?;
    Ok(net)
}
