//! Slow, independent reference implementations.
//!
//! Nothing in here shares code with the production paths it is compared
//! against. Tests and the `selfcheck` command use these as ground truth.

mod enumerate;
mod graphs;

pub use enumerate::{enumerate_alpha, enumerate_beta, enumerate_labels};
pub use graphs::random_episode_dag;

use crate::numcore::Tensor;

/// Six nested loops, explicit zero padding.
pub fn naive_conv2d(input: &Tensor, kernel: &Tensor, bias: Option<&Tensor>) -> Tensor {
    let s = input.shape();
    let k = kernel.shape();
    let (c_in, h, w) = (s[0], s[1], s[2]);
    let (c_out, kh, kw) = (k[0], k[2], k[3]);
    let (ph, pw) = (kh as isize / 2, kw as isize / 2);
    let mut out = Tensor::zeros(&[c_out, h, w]);
    for c in 0..c_out {
        for i in 0..h {
            for j in 0..w {
                let mut acc = bias.map_or(0.0, |b| b.get(&[c]));
                for l in 0..c_in {
                    for u in 0..kh {
                        for v in 0..kw {
                            let si = i as isize + u as isize - ph;
                            let sj = j as isize + v as isize - pw;
                            let x = if si < 0 || sj < 0 || si >= h as isize || sj >= w as isize {
                                0.0
                            } else {
                                input.get(&[l, si as usize, sj as usize])
                            };
                            acc += kernel.get(&[c, l, u, v]) * x;
                        }
                    }
                }
                out.set(&[c, i, j], acc);
            }
        }
    }
    out
}

/// Per-cell scan; returns maxima and the first maximizing channel.
pub fn naive_channel_max(input: &Tensor) -> (Tensor, Vec<u32>) {
    let s = input.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let mut vals = Tensor::zeros(&[h, w]);
    let mut arg = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let mut best = f64::NEG_INFINITY;
            let mut best_c = 0;
            for ch in 0..c {
                let v = input.get(&[ch, i, j]);
                if v > best {
                    best = v;
                    best_c = ch;
                }
            }
            vals.set(&[i, j], best);
            arg.push(best_c as u32);
        }
    }
    (vals, arg)
}

/// Row-by-row dot products.
pub fn naive_dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Tensor {
    let (m, n) = (weights.shape()[0], weights.shape()[1]);
    let mut out = Vec::with_capacity(m);
    for r in 0..m {
        let mut acc = bias.data()[r];
        for k in 0..n {
            acc += weights.get(&[r, k]) * input.data()[k];
        }
        out.push(acc);
    }
    Tensor::vector(out)
}

/// Breadth-first distances (in moves) from every open cell to `target`
/// on a 4-connected grid. `open[r][c]` marks traversable cells.
pub fn bfs_distances(open: &[Vec<bool>], target: (usize, usize)) -> Vec<Vec<Option<usize>>> {
    let h = open.len();
    let w = open[0].len();
    let mut dist = vec![vec![None; w]; h];
    let mut queue = std::collections::VecDeque::new();
    dist[target.0][target.1] = Some(0);
    queue.push_back(target);
    while let Some((r, c)) = queue.pop_front() {
        let d = dist[r][c].unwrap();
        let nbrs = [
            (r.wrapping_sub(1), c),
            (r + 1, c),
            (r, c.wrapping_sub(1)),
            (r, c + 1),
        ];
        for (nr, nc) in nbrs {
            if nr < h && nc < w && open[nr][nc] && dist[nr][nc].is_none() {
                dist[nr][nc] = Some(d + 1);
                queue.push_back((nr, nc));
            }
        }
    }
    dist
}
