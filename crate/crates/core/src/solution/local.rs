use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{BackupEstimate, EstimateKind, Recommend, Step, TraceRecord};
use crate::error::{Error, Result};
use crate::update::{eligibility_weight, local_update, LocalUpdateRule};

pub type NodeId = usize;

/// How many new nodes a trial may add to the local solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeGrowth {
    /// Every visited non-terminal state gets a node.
    Unbounded,
    /// The first unseen state of each trial becomes a node, later ones are roll-out.
    OnePerTrial,
    /// Only the root is stored.
    RootOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalConfig {
    pub reuse: bool,
    pub tree_mode: bool,
    pub growth: NodeGrowth,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            reuse: false,
            tree_mode: false,
            growth: NodeGrowth::Unbounded,
        }
    }
}

/// Fixed-reference accumulator for depth-weighted targets within one root epoch.
/// Keeps one target per depth: a trial cut short by the end of the episode
/// repeats an earlier depth and is skipped, its weight going to the tail.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Elig {
    epoch: u64,
    acc: f64,
    weight: f64,
    base: f64,
    last: f64,
    deepest: usize,
}

impl Elig {
    fn record(&mut self, epoch: u64, old: f64, target: f64, lambda: f64, depth: usize) -> f64 {
        if self.epoch != epoch {
            *self = Elig {
                epoch,
                acc: 0.0,
                weight: 0.0,
                base: old,
                last: target,
                deepest: 0,
            };
        }
        let depth = depth.max(1);
        if depth <= self.deepest {
            return self.acc + (1.0 - self.weight) * self.base;
        }
        self.deepest = depth;
        let w = eligibility_weight(lambda, depth);
        self.acc += w * target;
        self.weight += w;
        self.last = target;
        self.acc + (1.0 - self.weight) * self.base
    }

    /// Hands the untouched tail weight to the deepest target.
    fn finish(&mut self, epoch: u64) -> Option<f64> {
        if self.epoch != epoch {
            return None;
        }
        self.acc += (1.0 - self.weight) * self.last;
        self.weight = 1.0;
        Some(self.acc)
    }
}

/// Aggregates for one state (or one path in tree mode).
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub state: usize,
    pub v: f64,
    pub q: Vec<f64>,
    pub n_s: u64,
    pub n_sa: Vec<u64>,
    pub solved: bool,
    /// Set once a policy back-up has written `v`.
    pub backed_up: bool,
    elig_v: Elig,
    elig_q: Vec<Elig>,
    children: BTreeMap<(usize, usize), NodeId>,
}

impl Node {
    fn new(state: usize, v: f64, q: Vec<f64>) -> Self {
        let n_actions = q.len();
        Self {
            state,
            v,
            q,
            n_s: 0,
            n_sa: vec![0; n_actions],
            solved: false,
            backed_up: false,
            elig_v: Elig::default(),
            elig_q: vec![Elig::default(); n_actions],
            children: BTreeMap::new(),
        }
    }

    pub fn tried(&self, a: usize) -> bool {
        self.n_sa[a] > 0
    }

    pub fn all_tried(&self) -> bool {
        self.n_sa.iter().all(|&n| n > 0)
    }
}

/// Per-root store of node aggregates, frontier and explored sets.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    config: LocalConfig,
    n_actions: usize,
    nodes: Vec<Node>,
    by_state: HashMap<usize, NodeId>,
    tree_roots: HashMap<usize, NodeId>,
    root: NodeId,
    frontier: BTreeSet<NodeId>,
    explored: BTreeSet<NodeId>,
    epoch: u64,
    /// Linear trial records kept for inspection and episodic updates.
    pub trace_buffer: Vec<TraceRecord>,
    /// Real steps of the current episode, replayed by later roots.
    pub episode: Vec<Step>,
    /// Offset of the current root within `episode`.
    pub episode_cursor: usize,
}

const TRACE_BUFFER_CAP: usize = 64;

/// Fresh local solution for `root`, or the carried-over one when reuse is on.
pub fn init_local(
    root: usize,
    carryover: Option<LocalSolution>,
    config: LocalConfig,
    n_actions: usize,
    v0: f64,
    q0: Vec<f64>,
) -> LocalSolution {
    let mut local = match carryover {
        Some(mut prev) if config.reuse => {
            prev.config = config;
            prev.epoch += 1;
            if prev.trace_buffer.len() > TRACE_BUFFER_CAP {
                let excess = prev.trace_buffer.len() - TRACE_BUFFER_CAP;
                prev.trace_buffer.drain(..excess);
            }
            prev
        }
        _ => LocalSolution {
            config,
            n_actions,
            nodes: Vec::new(),
            by_state: HashMap::new(),
            tree_roots: HashMap::new(),
            root: 0,
            frontier: BTreeSet::new(),
            explored: BTreeSet::new(),
            epoch: 1,
            trace_buffer: Vec::new(),
            episode: Vec::new(),
            episode_cursor: 0,
        },
    };
    local.root = match local.lookup(root, None) {
        Some(id) => id,
        None => local.insert(root, None, v0, q0),
    };
    local
}

impl LocalSolution {
    pub fn config(&self) -> LocalConfig {
        self.config
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn root_state(&self) -> usize {
        self.nodes[self.root].state
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate()
    }

    /// Node reached from `parent` via action `a` into `state`; in graph mode
    /// the parent is irrelevant.
    pub fn lookup(&self, state: usize, parent: Option<(NodeId, usize)>) -> Option<NodeId> {
        if !self.config.tree_mode {
            return self.by_state.get(&state).copied();
        }
        match parent {
            Some((p, a)) => self.nodes[p].children.get(&(a, state)).copied(),
            None => self.tree_roots.get(&state).copied(),
        }
    }

    /// Adds a node on the frontier.
    pub fn insert(&mut self, state: usize, parent: Option<(NodeId, usize)>, v: f64, q: Vec<f64>) -> NodeId {
        debug_assert_eq!(q.len(), self.n_actions);
        let id = self.nodes.len();
        self.nodes.push(Node::new(state, v, q));
        if self.config.tree_mode {
            match parent {
                Some((p, a)) => {
                    self.nodes[p].children.insert((a, state), id);
                }
                None => {
                    self.tree_roots.insert(state, id);
                }
            }
        } else {
            self.by_state.insert(state, id);
        }
        self.frontier.insert(id);
        id
    }

    /// First node holding `state` (the graph node, or a tree root, or any path).
    pub fn node_of_state(&self, state: usize) -> Option<NodeId> {
        if !self.config.tree_mode {
            return self.by_state.get(&state).copied();
        }
        if self.nodes[self.root].state == state {
            return Some(self.root);
        }
        self.tree_roots
            .get(&state)
            .copied()
            .or_else(|| self.nodes.iter().position(|n| n.state == state))
    }

    pub fn is_frontier(&self, id: NodeId) -> bool {
        self.frontier.contains(&id)
    }

    pub fn is_explored(&self, id: NodeId) -> bool {
        self.explored.contains(&id)
    }

    pub fn frontier_states(&self) -> BTreeSet<usize> {
        self.frontier.iter().map(|&id| self.nodes[id].state).collect()
    }

    pub fn explored_states(&self) -> BTreeSet<usize> {
        self.explored.iter().map(|&id| self.nodes[id].state).collect()
    }

    /// Moves node `id` from the frontier to the explored set.
    pub fn expand(&mut self, id: NodeId) -> Result<()> {
        if !self.frontier.remove(&id) {
            return Err(Error::NotOnFrontier(self.nodes.get(id).map_or(id, |n| n.state)));
        }
        self.explored.insert(id);
        Ok(())
    }

    /// Moves the node of state `s` from the frontier to the explored set.
    pub fn expand_node(&mut self, s: usize) -> Result<()> {
        let id = self.node_of_state(s).ok_or(Error::NotOnFrontier(s))?;
        self.expand(id)
    }

    /// Folds `est` into the node of `est.s`.
    pub fn record_estimate(&mut self, est: &BackupEstimate, rule: LocalUpdateRule) -> Result<()> {
        let id = self
            .node_of_state(est.s)
            .ok_or_else(|| Error::Config(format!("no local node for state {}", est.s)))?;
        self.record_estimate_at(id, est, rule);
        Ok(())
    }

    /// Folds `est` into node `id`, bumping the matching counter. A node whose
    /// actions have all been tried leaves the frontier.
    pub fn record_estimate_at(&mut self, id: NodeId, est: &BackupEstimate, rule: LocalUpdateRule) {
        let epoch = self.epoch;
        let node = &mut self.nodes[id];
        match (est.kind, est.a) {
            (EstimateKind::StateAction, Some(a)) => {
                node.n_sa[a] += 1;
                node.q[a] = match rule {
                    LocalUpdateRule::Eligibility { lambda } => {
                        node.elig_q[a].record(epoch, node.q[a], est.value, lambda, est.source_depth)
                    }
                    _ => local_update(rule, node.q[a], est.value, node.n_sa[a], est.source_depth),
                };
                if node.all_tried() && self.frontier.contains(&id) {
                    self.frontier.remove(&id);
                    self.explored.insert(id);
                }
            }
            _ => {
                node.n_s += 1;
                node.v = match rule {
                    LocalUpdateRule::Eligibility { lambda } => {
                        node.elig_v.record(epoch, node.v, est.value, lambda, est.source_depth)
                    }
                    _ => local_update(rule, node.v, est.value, node.n_s, est.source_depth),
                };
                node.backed_up = true;
            }
        }
    }

    /// Closes the eligibility mixture of node `id` for this root epoch.
    pub fn finish_eligibility(&mut self, id: NodeId) {
        let epoch = self.epoch;
        let node = &mut self.nodes[id];
        if let Some(v) = node.elig_v.finish(epoch) {
            node.v = v;
        }
        for (q, e) in node.q.iter_mut().zip(node.elig_q.iter_mut()) {
            if let Some(value) = e.finish(epoch) {
                *q = value;
            }
        }
    }

    /// Recommended action at node `id`; ties go to the lowest index.
    pub fn recommend_at(&self, id: NodeId, mode: Recommend) -> Result<usize> {
        let node = &self.nodes[id];
        let mut best: Option<usize> = None;
        for a in (0..self.n_actions).filter(|&a| node.n_sa[a] > 0) {
            let better = match (best, mode) {
                (None, _) => true,
                (Some(b), Recommend::MaxValue) => node.q[a] > node.q[b],
                (Some(b), Recommend::MaxCount) => node.n_sa[a] > node.n_sa[b],
            };
            if better {
                best = Some(a);
            }
        }
        best.ok_or(Error::NoVisitedChildren(node.state))
    }

    pub fn recommend_action(&self, s: usize, mode: Recommend) -> Result<usize> {
        let id = self.node_of_state(s).ok_or(Error::NoVisitedChildren(s))?;
        self.recommend_at(id, mode)
    }

    /// Frontier and explored are disjoint and only reference existing nodes.
    pub fn check_invariants(&self) -> bool {
        self.frontier.is_disjoint(&self.explored)
            && self
                .frontier
                .iter()
                .chain(&self.explored)
                .all(|&id| id < self.nodes.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fresh(root: usize, n_actions: usize) -> LocalSolution {
        init_local(root, None, LocalConfig::default(), n_actions, 0.0, vec![0.0; n_actions])
    }

    #[test]
    fn empty_init() {
        let l = fresh(4, 2);
        assert_eq!(l.len(), 1);
        assert_eq!(l.frontier_states(), BTreeSet::from([4]));
        assert!(l.explored_states().is_empty());
    }

    #[test]
    fn carryover_with_reuse() {
        let cfg = LocalConfig { reuse: true, ..LocalConfig::default() };
        let mut l = init_local(0, None, cfg, 2, 0.0, vec![0.0; 2]);
        for s in 1..5 {
            l.insert(s, None, 0.0, vec![0.0; 2]);
        }
        assert_eq!(l.len(), 5);
        let next = init_local(9, Some(l.clone()), cfg, 2, 0.0, vec![0.0; 2]);
        assert_eq!(next.len(), 6);
        assert_eq!(next.root_state(), 9);
        let off = LocalConfig { reuse: false, ..cfg };
        assert_eq!(init_local(9, Some(l), off, 2, 0.0, vec![0.0; 2]).len(), 1);
    }

    #[test]
    fn explored_root_is_not_put_back_on_frontier() {
        let cfg = LocalConfig { reuse: true, ..LocalConfig::default() };
        let mut l = init_local(0, None, cfg, 1, 0.0, vec![0.0]);
        l.expand_node(0).unwrap();
        let l = init_local(0, Some(l), cfg, 1, 0.0, vec![0.0]);
        assert!(l.frontier_states().is_empty());
        assert_eq!(l.explored_states(), BTreeSet::from([0]));
    }

    #[test]
    fn expand_requires_frontier() {
        let mut l = fresh(0, 2);
        l.expand_node(0).unwrap();
        assert_eq!(l.expand_node(0), Err(Error::NotOnFrontier(0)));
        assert_eq!(l.expand_node(3), Err(Error::NotOnFrontier(3)));
    }

    #[test]
    fn record_rules_and_counts() {
        let mut l = init_local(0, None, LocalConfig::default(), 2, 0.0, vec![5.0, 0.0]);
        l.record_estimate(&BackupEstimate::state_action(0, 0, 2.0, 1), LocalUpdateRule::Replace)
            .unwrap();
        assert_eq!(l.node(0).q[0], 2.0);
        l.record_estimate(&BackupEstimate::state_action(0, 1, 1.0, 1), LocalUpdateRule::Average)
            .unwrap();
        assert_eq!(l.node(0).n_sa[1], 1);
        l.record_estimate(&BackupEstimate::state_action(0, 1, 3.0, 1), LocalUpdateRule::Average)
            .unwrap();
        assert_eq!(l.node(0).n_sa[1], 2);
        assert_eq!(l.node(0).q[1], 2.0);
        assert!(l.is_explored(0));
    }

    #[test]
    fn recommendations() {
        let mut l = fresh(0, 2);
        l.node_mut(0).q = vec![1.0, 2.0];
        l.node_mut(0).n_sa = vec![7, 7];
        assert_eq!(l.recommend_action(0, Recommend::MaxValue).unwrap(), 1);
        assert_eq!(l.recommend_action(0, Recommend::MaxCount).unwrap(), 0);
        let empty = fresh(0, 2);
        assert_eq!(empty.recommend_action(0, Recommend::MaxValue), Err(Error::NoVisitedChildren(0)));
    }

    #[test]
    fn eligibility_mixture_with_tail_to_deepest() {
        let rule = LocalUpdateRule::Eligibility { lambda: 0.5 };
        let mut l = fresh(0, 1);
        for (d, target) in [(1, 4.0), (2, 8.0), (3, 2.0)] {
            l.record_estimate(&BackupEstimate::state(0, target, d), rule).unwrap();
        }
        // weights 0.5, 0.25, 0.125 and the 0.125 tail on the deepest target
        l.finish_eligibility(0);
        let expected = 0.5 * 4.0 + 0.25 * 8.0 + 0.125 * 2.0 + 0.125 * 2.0;
        assert!((l.node(0).v - expected).abs() < 1e-12);
    }

    #[test]
    fn eligibility_skips_repeated_depths() {
        let rule = LocalUpdateRule::Eligibility { lambda: 0.5 };
        let mut l = fresh(0, 1);
        for (d, target) in [(1, 4.0), (2, 8.0), (2, 8.0), (2, 8.0)] {
            l.record_estimate(&BackupEstimate::state(0, target, d), rule).unwrap();
        }
        l.finish_eligibility(0);
        assert!((l.node(0).v - (0.5 * 4.0 + 0.5 * 8.0)).abs() < 1e-12);
    }

    #[test]
    fn tree_mode_keys_by_path() {
        let cfg = LocalConfig { tree_mode: true, ..LocalConfig::default() };
        let mut l = init_local(0, None, cfg, 2, 0.0, vec![0.0; 2]);
        let a = l.insert(1, Some((0, 0)), 0.0, vec![0.0; 2]);
        let b = l.insert(1, Some((0, 1)), 0.0, vec![0.0; 2]);
        assert_ne!(a, b);
        assert_eq!(l.lookup(1, Some((0, 1))), Some(b));
        assert_eq!(l.lookup(1, Some((a, 0))), None);
    }
}
