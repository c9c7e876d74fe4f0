//! Experience graph of visited (state, action) pairs.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write;
use std::ops::Range;

use crate::env::{Action, StateId};
use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub state: StateId,
    pub action: Action,
    /// Last reward observed after taking `action` in `state`; `None` until
    /// the pair has been executed (it may first appear as a successor).
    pub reward: Option<f64>,
    pub visits: u32,
}

#[derive(Clone, Debug)]
pub struct ExperienceGraph {
    step_reward: f64,
    nodes: Vec<Node>,
    index: HashMap<(StateId, Action), NodeId>,
    edges: BTreeSet<(NodeId, NodeId)>,
    trace: Vec<NodeId>,
    episodes: Vec<Range<usize>>,
    open_from: usize,
}

impl ExperienceGraph {
    /// `step_reward` is the environment's ordinary per-step reward; nodes
    /// whose reward differs from it are rewarding.
    pub fn new(step_reward: f64) -> Self {
        Self {
            step_reward,
            nodes: Vec::new(),
            index: HashMap::new(),
            edges: BTreeSet::new(),
            trace: Vec::new(),
            episodes: Vec::new(),
            open_from: 0,
        }
    }

    pub fn step_reward(&self) -> f64 {
        self.step_reward
    }

    fn upsert(&mut self, s: StateId, a: Action) -> NodeId {
        let next = self.nodes.len();
        let id = *self.index.entry((s, a)).or_insert(next);
        if id == next {
            self.nodes.push(Node {
                state: s,
                action: a,
                reward: None,
                visits: 0,
            });
        }
        id
    }

    fn record_visit(&mut self, id: NodeId, r: f64) {
        let node = &mut self.nodes[id];
        node.reward = Some(r);
        node.visits += 1;
        if self.trace.len() == self.open_from || self.trace.last() != Some(&id) {
            self.trace.push(id);
        }
    }

    /// Records that `(s, a)` earned `r` and was followed by `(s_next, a_next)`.
    pub fn add_transition(
        &mut self,
        s: StateId,
        a: Action,
        r: f64,
        s_next: StateId,
        a_next: Action,
    ) -> (NodeId, NodeId) {
        let from = self.upsert(s, a);
        let to = self.upsert(s_next, a_next);
        self.record_visit(from, r);
        self.trace.push(to);
        self.edges.insert((from, to));
        (from, to)
    }

    /// Records the last step of an episode and closes it.
    pub fn add_terminal(&mut self, s: StateId, a: Action, r: f64) -> NodeId {
        let id = self.upsert(s, a);
        self.record_visit(id, r);
        self.end_episode();
        id
    }

    /// Closes the current episode, if any steps were recorded in it.
    pub fn end_episode(&mut self) {
        if self.trace.len() > self.open_from {
            self.episodes.push(self.open_from..self.trace.len());
            self.open_from = self.trace.len();
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.step_reward);
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn node_id(&self, s: StateId, a: Action) -> Option<NodeId> {
        self.index.get(&(s, a)).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: NodeId, j: NodeId) -> bool {
        self.edges.contains(&(i, j))
    }

    pub fn successors(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for &(i, j) in &self.edges {
            out[i].push(j);
        }
        out
    }

    pub fn predecessors(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for &(i, j) in &self.edges {
            out[j].push(i);
        }
        out
    }

    /// Node visit sequences, one per closed episode.
    pub fn episodes(&self) -> impl Iterator<Item = &[NodeId]> + '_ {
        self.episodes.iter().map(|r| &self.trace[r.clone()])
    }

    /// Nodes that opened an episode.
    pub fn episode_starts(&self) -> Vec<bool> {
        let mut out = vec![false; self.nodes.len()];
        for r in &self.episodes {
            out[self.trace[r.start]] = true;
        }
        if self.trace.len() > self.open_from {
            out[self.trace[self.open_from]] = true;
        }
        out
    }

    /// Nodes after which a trajectory stopped: last node of an episode, or
    /// a node with no recorded successor.
    pub fn episode_ends(&self) -> Vec<bool> {
        let mut out = vec![false; self.nodes.len()];
        for r in &self.episodes {
            out[self.trace[r.end - 1]] = true;
        }
        let mut has_succ = vec![false; self.nodes.len()];
        for &(i, _) in &self.edges {
            has_succ[i] = true;
        }
        for (o, h) in out.iter_mut().zip(has_succ) {
            *o |= !h;
        }
        out
    }

    /// Reward used for message passing: the observed reward, or the step
    /// reward for pairs never executed.
    pub fn reward_or_step(&self, id: NodeId) -> f64 {
        self.nodes[id].reward.unwrap_or(self.step_reward)
    }

    /// Nodes whose stored reward differs from the step reward.
    pub fn rewarding_nodes(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].reward, Some(r) if r != self.step_reward))
            .collect()
    }

    /// Dense 0/1 adjacency matrix in node order.
    pub fn adjacency(&self) -> Vec<Vec<f64>> {
        let n = self.nodes.len();
        let mut m = vec![vec![0.0; n]; n];
        for &(i, j) in &self.edges {
            m[i][j] = 1.0;
        }
        m
    }

    /// Distinct states present in the graph, ascending.
    pub fn states(&self) -> Vec<StateId> {
        let set: BTreeSet<StateId> = self.nodes.iter().map(|n| n.state).collect();
        set.into_iter().collect()
    }

    /// Line-oriented text dump; see [`ExperienceGraph::parse_dump`].
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let r = n.reward.map_or("none".to_string(), |r| r.to_string());
            writeln!(out, "node {i} s={} a={} r={r} n={}", n.state, n.action.index(), n.visits).unwrap();
        }
        for &(i, j) in &self.edges {
            writeln!(out, "edge {i} {j}").unwrap();
        }
        for ep in self.episodes() {
            let ids: Vec<String> = ep.iter().map(|i| i.to_string()).collect();
            writeln!(out, "episode {}", ids.join(" ")).unwrap();
        }
        out
    }

    pub fn parse_dump(text: &str, step_reward: f64) -> Result<Self> {
        let mut g = Self::new(step_reward);
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let err = |msg: String| Error::Parse { line: lineno, msg };
            let mut toks = line.split_whitespace();
            let Some(kind) = toks.next() else { continue };
            let rest: Vec<&str> = toks.collect();
            let int = |t: &str| t.parse::<usize>().map_err(|_| err(format!("bad integer {t:?}")));
            match kind {
                "node" => {
                    let idx = int(rest.first().ok_or_else(|| err("missing index".into()))?)?;
                    if idx != g.nodes.len() {
                        return Err(err(format!("node {idx} out of order")));
                    }
                    let (mut s, mut a, mut r, mut n) = (None, None, None, 0);
                    for kv in &rest[1..] {
                        let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("bad field {kv:?}")))?;
                        match k {
                            "s" => s = Some(int(v)?),
                            "a" => {
                                a = Some(Action::from_index(int(v)?).ok_or_else(|| err(format!("bad action {v}")))?)
                            }
                            "r" if v == "none" => {}
                            "r" => r = Some(v.parse::<f64>().map_err(|_| err(format!("bad reward {v:?}")))?),
                            "n" => n = int(v)? as u32,
                            _ => return Err(err(format!("unknown field {k:?}"))),
                        }
                    }
                    let (s, a) = (s.ok_or_else(|| err("missing s".into()))?, a.ok_or_else(|| err("missing a".into()))?);
                    if g.index.contains_key(&(s, a)) {
                        return Err(err(format!("duplicate node s={s} a={}", a.index())));
                    }
                    g.index.insert((s, a), idx);
                    g.nodes.push(Node {
                        state: s,
                        action: a,
                        reward: r,
                        visits: n,
                    });
                }
                "edge" => {
                    if rest.len() != 2 {
                        return Err(err("edge needs two endpoints".into()));
                    }
                    let (i, j) = (int(rest[0])?, int(rest[1])?);
                    if i >= g.nodes.len() || j >= g.nodes.len() {
                        return Err(err(format!("edge {i} {j} references a missing node")));
                    }
                    g.edges.insert((i, j));
                }
                "episode" => {
                    if rest.is_empty() {
                        return Err(err("empty episode".into()));
                    }
                    for t in &rest {
                        let id = int(t)?;
                        if id >= g.nodes.len() {
                            return Err(err(format!("episode references missing node {id}")));
                        }
                        g.trace.push(id);
                    }
                    g.end_episode();
                }
                other => return Err(err(format!("unknown record {other:?}"))),
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Action::*;

    #[test]
    fn one_transition() {
        let mut g = ExperienceGraph::new(-0.01);
        g.add_transition(0, Right, -0.01, 1, Right);
        assert_eq!((g.num_nodes(), g.num_edges()), (2, 1));
    }

    #[test]
    fn repeated_transition_is_idempotent_on_edges() {
        let mut g = ExperienceGraph::new(-0.01);
        g.add_transition(0, Right, -0.01, 1, Right);
        g.add_transition(0, Right, -0.01, 1, Right);
        assert_eq!((g.num_nodes(), g.num_edges()), (2, 1));
        assert_eq!(g.node(0).visits, 2);
    }

    #[test]
    fn adjacency_of_chain() {
        let mut g = ExperienceGraph::new(-0.01);
        g.add_transition(0, Right, -0.01, 1, Right);
        g.add_transition(1, Right, -0.01, 2, Right);
        g.add_terminal(2, Right, 1.0);
        let m = g.adjacency();
        for (i, row) in m.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if j == i + 1 { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(g.rewarding_nodes(), vec![2]);
        assert_eq!(g.episode_starts(), vec![true, false, false]);
        assert_eq!(g.episode_ends(), vec![false, false, true]);
    }

    #[test]
    fn single_node_adjacency() {
        let mut g = ExperienceGraph::new(0.0);
        g.add_terminal(3, Up, 1.0);
        assert_eq!(g.adjacency(), vec![vec![0.0]]);
    }

    #[test]
    fn reset_clears_everything() {
        let mut g = ExperienceGraph::new(-0.01);
        g.add_transition(4, Up, -0.01, 5, Down);
        g.reset();
        assert_eq!(g.num_nodes(), 0);
        g.reset();
        assert_eq!((g.num_nodes(), g.num_edges(), g.episodes().count()), (0, 0, 0));
        let (a, b) = g.add_transition(7, Left, -0.01, 8, Left);
        assert_eq!((a, b), (0, 1));
    }

    #[test]
    fn dump_round_trips() {
        let mut g = ExperienceGraph::new(-0.01);
        g.add_transition(0, Right, -0.01, 1, Down);
        g.add_transition(1, Down, -1.0, 0, Right);
        g.add_transition(0, Right, -0.01, 1, Up);
        g.add_terminal(1, Up, 1.0);
        let text = g.dump();
        let h = ExperienceGraph::parse_dump(&text, -0.01).unwrap();
        assert_eq!(h.dump(), text);
        assert_eq!(h.rewarding_nodes(), g.rewarding_nodes());
        assert!(ExperienceGraph::parse_dump("edge 0 1\n", 0.0).is_err());
    }
}
