//! Message values by explicit enumeration of every trajectory through an
//! acyclic experience graph.
//!
//! A virtual entry node precedes every episode-start node and every node
//! without predecessors; a virtual exit follows every episode-end node and
//! every node without successors. Each path picks uniformly among a node's
//! exits (for backward messages) or entries (for forward messages).

use crate::graph::ExperienceGraph;

struct Augmented {
    out: Vec<Vec<Option<usize>>>,
    inn: Vec<Vec<Option<usize>>>,
}

fn augment(g: &ExperienceGraph) -> Augmented {
    let n = g.num_nodes();
    let mut out: Vec<Vec<Option<usize>>> = vec![Vec::new(); n];
    let mut inn: Vec<Vec<Option<usize>>> = vec![Vec::new(); n];
    for (i, j) in g.edges() {
        out[i].push(Some(j));
        inn[j].push(Some(i));
    }
    let mut first = vec![false; n];
    let mut last = vec![false; n];
    for ep in g.episodes() {
        first[ep[0]] = true;
        last[*ep.last().unwrap()] = true;
    }
    for i in 0..n {
        if last[i] || out[i].is_empty() {
            out[i].push(None);
        }
        if first[i] || inn[i].is_empty() {
            inn[i].push(None);
        }
    }
    Augmented { out, inn }
}

fn paths(adj: &[Vec<Option<usize>>], node: usize, depth: usize, visit: &mut dyn FnMut(&[usize], f64)) {
    fn walk(
        adj: &[Vec<Option<usize>>],
        path: &mut Vec<usize>,
        weight: f64,
        depth: usize,
        visit: &mut dyn FnMut(&[usize], f64),
    ) {
        assert!(path.len() <= depth, "graph has a cycle");
        let cur = *path.last().unwrap();
        let w = weight / adj[cur].len() as f64;
        for &next in &adj[cur] {
            match next {
                None => visit(path, w),
                Some(j) => {
                    path.push(j);
                    walk(adj, path, w, depth, visit);
                    path.pop();
                }
            }
        }
    }
    walk(adj, &mut vec![node], 1.0, depth, visit);
}

/// β for every node of an acyclic graph, given per-node probabilities.
pub fn enumerate_beta(g: &ExperienceGraph, probs: &[f64]) -> Vec<f64> {
    let aug = augment(g);
    let n = g.num_nodes();
    (0..n)
        .map(|i| {
            let mut total = 0.0;
            paths(&aug.out, i, n, &mut |path, w| {
                total += w * path.iter().map(|&k| probs[k]).product::<f64>();
            });
            total
        })
        .collect()
}

/// α for every node of an acyclic graph, with uniform prior `1/n`.
pub fn enumerate_alpha(g: &ExperienceGraph, probs: &[f64]) -> Vec<f64> {
    let aug = augment(g);
    let n = g.num_nodes();
    (0..n)
        .map(|i| {
            let mut total = 0.0;
            paths(&aug.inn, i, n, &mut |path, w| {
                total += w * path[1..].iter().map(|&k| probs[k]).product::<f64>();
            });
            total / n as f64
        })
        .collect()
}

/// Labels: min-max of α·β onto `[1e-3, 1]`, all ones when α·β is flat.
pub fn enumerate_labels(g: &ExperienceGraph, probs: &[f64]) -> Vec<f64> {
    let a = enumerate_alpha(g, probs);
    let b = enumerate_beta(g, probs);
    let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let lo = prod.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = prod.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-9 * hi {
        return vec![1.0; prod.len()];
    }
    prod.iter().map(|&x| 1e-3 + 0.999 * (x - lo) / (hi - lo)).collect()
}
