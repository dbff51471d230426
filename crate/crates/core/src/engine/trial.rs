//! One trial: the forward recursion over states and actions with the
//! back-ups applied on the way out.

use rand_chacha::ChaCha8Rng;

use crate::backup::{
    dynamics_backup, policy_backup, BackupOp, BootstrapFn, DynamicsBackup, Location, Observed, PolicyBackup,
};
use crate::control::{depth_reached, DepthProbe, DepthRule, TrialBudget};
use crate::error::{Error, Result};
use crate::mdp::{stream_rng, AccessHandle, QueryResult};
use crate::select::{
    action_distribution, select_next_state, ActionView, NextStateChoice, NextStateRule, Phase, SelectionRule,
};
use crate::solution::{BackupEstimate, Coverage, GlobalSolution, LocalSolution, NodeGrowth, NodeId, Step};
use crate::update::LocalUpdateRule;

/// Initial aggregates for nodes created during trials.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum NodeInit {
    /// Copy the global tables.
    FromGlobal,
    Constant(f64),
    PerState(Vec<f64>),
    Random { seed: u64, scale: f64 },
}

/// Trial-level dimensions shared by real and simulated roots.
#[derive(Debug, Clone)]
pub(crate) struct TrialSpec {
    pub select: SelectionRule,
    pub depth: DepthRule,
    pub budget: TrialBudget,
    pub backup: BackupOp,
    pub bootstrap: BootstrapFn,
    pub update_local: LocalUpdateRule,
    pub coverage: Coverage,
    pub growth: NodeGrowth,
    pub init: NodeInit,
}

impl TrialSpec {
    fn descriptive(&self) -> bool {
        self.backup.dynamics == DynamicsBackup::Expected || self.select.next_state == NextStateRule::Ordered
    }
}

/// The real episode replayed and extended by trials under resettable access.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Episode {
    pub steps: Vec<Step>,
    /// Offset of the current root within `steps`.
    pub cursor: usize,
    /// State the environment is in after the last real step.
    pub current: usize,
}

/// Per-trial measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialStat {
    pub root: usize,
    pub value: f64,
    /// Number of forward steps along the deepest path.
    pub depth: usize,
    pub queries: u64,
    /// A node was created or an action tried for the first time.
    pub expanded: bool,
    /// Largest change of any local aggregate.
    pub max_change: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Parent {
    Root,
    Node(NodeId, usize),
    /// Below a state that has no node.
    Rollout,
}

pub(crate) fn node_init(
    spec: &TrialSpec,
    global: &GlobalSolution,
    source: &dyn crate::mdp::TransitionSource,
    s: usize,
) -> Result<(f64, Vec<f64>)> {
    let m = global.n_actions();
    Ok(match &spec.init {
        NodeInit::FromGlobal => {
            let q: Vec<f64> = (0..m)
                .map(|a| spec.bootstrap.bootstrap(s, Some(a), global, source))
                .collect::<Result<_>>()?;
            (global.state_value(s), q)
        }
        NodeInit::Constant(c) => (*c, vec![*c; m]),
        NodeInit::PerState(values) => {
            let v = *values.get(s).ok_or(Error::MissingHeuristicEntry(s))?;
            (v, vec![v; m])
        }
        NodeInit::Random { seed, scale } => {
            use rand::Rng;
            let mut rng = stream_rng(*seed, 0x1417_0000 + s as u64);
            let mut draw = || scale * (2.0 * rng.random::<f64>() - 1.0);
            let v = draw();
            (v, (0..m).map(|_| draw()).collect())
        }
    })
}

pub(crate) struct Trial<'a, 'h> {
    pub spec: &'a TrialSpec,
    pub global: &'a mut GlobalSolution,
    pub local: &'a mut LocalSolution,
    pub handle: &'a mut AccessHandle<'h>,
    pub rng: &'a mut ChaCha8Rng,
    pub episode: Option<&'a mut Episode>,
    pub pending: &'a mut Option<(usize, usize)>,
    /// Outer step counter, drives epsilon decay.
    pub step: u64,
    path: Vec<usize>,
    trial_index: usize,
    node_made: bool,
    expanded: bool,
    max_change: f64,
    max_depth: usize,
    pub root_action: Option<usize>,
}

impl<'a, 'h> Trial<'a, 'h> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        spec: &'a TrialSpec,
        global: &'a mut GlobalSolution,
        local: &'a mut LocalSolution,
        handle: &'a mut AccessHandle<'h>,
        rng: &'a mut ChaCha8Rng,
        episode: Option<&'a mut Episode>,
        pending: &'a mut Option<(usize, usize)>,
        step: u64,
    ) -> Self {
        Self {
            spec,
            global,
            local,
            handle,
            rng,
            episode,
            pending,
            step,
            path: Vec::new(),
            trial_index: 0,
            node_made: false,
            expanded: false,
            max_change: 0.0,
            max_depth: 0,
            root_action: None,
        }
    }

    pub fn run(&mut self, root: usize, trial_index: usize) -> Result<TrialStat> {
        self.path.clear();
        self.trial_index = trial_index;
        self.node_made = false;
        self.expanded = false;
        self.max_change = 0.0;
        self.max_depth = 0;
        let before = self.handle.query_count();
        let (value, _) = self.visit_state(root, Parent::Root, 0, false)?;
        Ok(TrialStat {
            root,
            value,
            depth: self.max_depth,
            queries: self.handle.query_count() - before,
            expanded: self.expanded,
            max_change: self.max_change,
        })
    }

    fn n_actions(&self) -> usize {
        self.global.n_actions()
    }

    fn lookup(&self, s: usize, parent: Parent) -> Option<NodeId> {
        let tree = self.local.config().tree_mode;
        match parent {
            Parent::Root => self.local.lookup(s, None),
            Parent::Node(id, a) => self.local.lookup(s, Some((id, a))),
            Parent::Rollout if tree => None,
            Parent::Rollout => self.local.lookup(s, None),
        }
    }

    /// Creates a node for `s` when the growth rule allows it.
    fn grow(&mut self, s: usize, parent: Parent) -> Result<Option<NodeId>> {
        let allowed = match self.spec.growth {
            NodeGrowth::Unbounded => true,
            NodeGrowth::OnePerTrial => !self.node_made,
            NodeGrowth::RootOnly => false,
        };
        let link = match parent {
            Parent::Root => None,
            Parent::Node(id, a) => Some((id, a)),
            Parent::Rollout if self.local.config().tree_mode => return Ok(None),
            Parent::Rollout => None,
        };
        if !allowed {
            return Ok(None);
        }
        self.node_made = true;
        self.expanded = true;
        let (v, q) = node_init(self.spec, self.global, self.handle.source(), s)?;
        Ok(Some(self.local.insert(s, link, v, q)))
    }

    fn fallback(&self, s: usize, a: usize) -> Result<f64> {
        self.spec.bootstrap.bootstrap(s, Some(a), self.global, self.handle.source())
    }

    fn is_solved(&self, s: usize, id: Option<NodeId>) -> bool {
        self.spec.backup.extras.labels
            && (self.global.is_solved(s) || id.is_some_and(|id| self.local.node(id).solved))
    }

    /// Current estimate of `V(s)` without expanding it.
    fn value_lookup(&self, s: usize) -> Result<f64> {
        if self.handle.is_terminal(s) {
            return Ok(0.0);
        }
        if self.spec.coverage == Coverage::Local {
            if let Some(id) = self.local.node_of_state(s) {
                return Ok(self.local.node(id).v);
            }
        }
        self.spec.bootstrap.bootstrap(s, None, self.global, self.handle.source())
    }

    fn bootstrap_state(&mut self, s: usize, existing: Option<NodeId>, parent: Parent) -> Result<f64> {
        let m = self.n_actions();
        let value = match self.spec.bootstrap.location {
            Location::StateAction => {
                let values: Vec<f64> = (0..m).map(|a| self.fallback(s, a)).collect::<Result<_>>()?;
                let counts = vec![0u64; m];
                let novelty = self.global.counts_sa_row(s).to_vec();
                let policy = self.global.enabled().policy.then(|| self.global.policy_probs(s));
                let view = ActionView {
                    q: &values,
                    n_sa: &counts,
                    n_s: 0,
                    novelty_counts: &novelty,
                    force_untried: false,
                    ordered_index: self.trial_index as u64,
                    policy: policy.as_deref(),
                    step: self.step,
                };
                match self.spec.backup.policy {
                    PolicyBackup::GreedyMax => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    PolicyBackup::Expected => {
                        let kind = self.spec.select.kind(Phase::BeforeFrontier);
                        let probs = action_distribution(kind, &view, self.spec.select.eps_decay);
                        let opt: Vec<Option<f64>> = values.iter().copied().map(Some).collect();
                        policy_backup(PolicyBackup::Expected, &opt, None, Some(&probs))?
                    }
                    PolicyBackup::OnPolicySample => {
                        let a = self.spec.select.select(Phase::BeforeFrontier, &view, self.rng);
                        *self.pending = Some((s, a));
                        values[a]
                    }
                }
            }
            Location::State => match existing.filter(|_| self.spec.coverage == Coverage::Local) {
                Some(id) => self.local.node(id).v,
                None => self.spec.bootstrap.bootstrap(s, None, self.global, self.handle.source())?,
            },
        };
        if existing.is_none() && self.spec.coverage == Coverage::Local {
            self.grow(s, parent)?;
        }
        Ok(value)
    }

    fn forced_action(&mut self, s: usize, depth: usize) -> Option<usize> {
        if let Some(ep) = self.episode.as_deref() {
            if let Some(step) = ep.steps.get(ep.cursor + depth) {
                return Some(step.a);
            }
        }
        match *self.pending {
            Some((ps, a)) if depth == 0 && ps == s => {
                *self.pending = None;
                Some(a)
            }
            _ => None,
        }
    }

    fn visit_state(&mut self, s: usize, parent: Parent, depth: usize, crossed: bool) -> Result<(f64, usize)> {
        if self.handle.is_terminal(s) {
            return Ok((0.0, depth));
        }
        let existing = self.lookup(s, parent);
        let repeated = self.path.contains(&s);
        let probe = DepthProbe {
            depth,
            repeated,
            explored: existing.is_some_and(|id| self.local.is_explored(id)),
            crossed_frontier: crossed,
            trial_index: self.trial_index,
            n_states: self.handle.n_states(),
        };
        let cycle = repeated && self.spec.select.next_state == NextStateRule::Ordered;
        let solved = depth > 0 && self.is_solved(s, existing);
        if cycle || solved || depth_reached(self.spec.depth, probe) {
            return Ok((self.bootstrap_state(s, existing, parent)?, depth));
        }
        let id = match existing {
            Some(id) => Some(id),
            None => self.grow(s, parent)?,
        };
        let phase = if existing.is_some() { Phase::BeforeFrontier } else { Phase::AfterFrontier };

        let m = self.n_actions();
        let fallback: Vec<f64> = (0..m).map(|a| self.fallback(s, a)).collect::<Result<_>>()?;
        let (q_view, n_sa, n_s) = match id {
            Some(id) => {
                let node = self.local.node(id);
                let q = (0..m).map(|a| if node.tried(a) { node.q[a] } else { fallback[a] }).collect();
                (q, node.n_sa.clone(), node.n_s)
            }
            None => (fallback.clone(), vec![0; m], 0),
        };
        let novelty = self.global.counts_sa_row(s).to_vec();
        let policy = self.global.enabled().policy.then(|| self.global.policy_probs(s));
        let view = ActionView {
            q: &q_view,
            n_sa: &n_sa,
            n_s,
            novelty_counts: &novelty,
            force_untried: self.spec.select.force_untried && id.is_some(),
            ordered_index: self.trial_index as u64,
            policy: policy.as_deref(),
            step: self.step,
        };
        let a = match self.forced_action(s, depth) {
            Some(a) => a,
            None => self.spec.select.select(phase, &view, self.rng),
        };
        let child_crossed = crossed || id.is_none_or(|id| !self.local.is_explored(id));

        self.path.push(s);
        let out = self.visit_action(s, a, id, depth, child_crossed);
        self.path.pop();
        let (q_hat, leaf) = out?;
        if depth == 0 {
            self.root_action = Some(a);
        }

        let rule = self.spec.update_local;
        let record = id.filter(|_| self.local.config().tree_mode || !repeated);
        if let Some(id) = record {
            let node = self.local.node(id);
            let (tried, old) = (node.tried(a), node.q[a]);
            self.local.record_estimate_at(id, &BackupEstimate::state_action(s, a, q_hat, leaf - depth), rule);
            if tried {
                self.max_change = self.max_change.max((self.local.node(id).q[a] - old).abs());
            } else {
                self.expanded = true;
            }
        }

        let mut values: Vec<f64> = match record {
            Some(id) => {
                let node = self.local.node(id);
                (0..m).map(|b| if node.tried(b) { node.q[b] } else { fallback[b] }).collect()
            }
            None => fallback,
        };
        if record.is_none() {
            values[a] = q_hat;
        }
        let v_hat = match self.spec.backup.policy {
            PolicyBackup::OnPolicySample => q_hat,
            PolicyBackup::GreedyMax => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            PolicyBackup::Expected => {
                let view = ActionView { q: &values, ..view };
                let probs = action_distribution(self.spec.select.kind(phase), &view, self.spec.select.eps_decay);
                let opt: Vec<Option<f64>> = values.iter().copied().map(Some).collect();
                policy_backup(PolicyBackup::Expected, &opt, Some(a), Some(&probs))?
            }
        };
        if let Some(id) = record {
            let old = self.local.node(id).v;
            let backed = self.local.node(id).backed_up;
            self.local.record_estimate_at(id, &BackupEstimate::state(s, v_hat, leaf - depth), rule);
            if backed {
                self.max_change = self.max_change.max((self.local.node(id).v - old).abs());
            }
        }
        Ok((v_hat, leaf))
    }

    fn visit_action(
        &mut self,
        s: usize,
        a: usize,
        id: Option<NodeId>,
        depth: usize,
        crossed: bool,
    ) -> Result<(f64, usize)> {
        let gamma = self.handle.gamma();
        let parent = match id {
            Some(id) => Parent::Node(id, a),
            None => Parent::Rollout,
        };
        let replay = self
            .episode
            .as_deref()
            .and_then(|ep| ep.steps.get(ep.cursor + depth).copied());
        let result = match replay {
            Some(step) => QueryResult::Sample { next: step.next, reward: step.r },
            None => {
                let answer = if self.spec.descriptive() {
                    self.handle.query_descriptive(s, a)
                } else {
                    self.handle.query_generative(s, a)
                };
                let answer = match answer {
                    Err(Error::UnvisitedPair(..)) => return Ok((self.fallback(s, a)?, depth)),
                    other => other?,
                };
                self.max_depth = self.max_depth.max(depth + 1);
                if let (Some(ep), QueryResult::Sample { next, reward }) = (self.episode.as_deref_mut(), &answer) {
                    ep.steps.push(Step { s, a, r: *reward, next: *next });
                    ep.current = *next;
                }
                answer
            }
        };
        if replay.is_some() {
            self.max_depth = self.max_depth.max(depth + 1);
        }
        match select_next_state(self.spec.select.next_state, &result, self.rng)? {
            NextStateChoice::One { next, reward } => {
                let (v, leaf) = self.visit_state(next, parent, depth + 1, crossed)?;
                let q = match (self.spec.backup.dynamics, &result) {
                    (DynamicsBackup::Expected, QueryResult::Distribution(dist)) => {
                        let mut children = Vec::with_capacity(dist.len());
                        for t in dist {
                            let vt = if t.next == next { v } else { self.value_lookup(t.next)? };
                            children.push((t.prob, t.reward, vt));
                        }
                        dynamics_backup(DynamicsBackup::Expected, Observed::Distribution(&children), gamma)?
                    }
                    (kind, _) => dynamics_backup(kind, Observed::Sample { reward, v_next: v }, gamma)?,
                };
                Ok((q, leaf))
            }
            NextStateChoice::AllChildren(dist) => {
                let mut children = Vec::with_capacity(dist.len());
                let mut leaf = depth + 1;
                for t in &dist {
                    let (v, l) = self.visit_state(t.next, parent, depth + 1, crossed)?;
                    leaf = leaf.max(l);
                    children.push((t.prob, t.reward, v));
                }
                let q = dynamics_backup(self.spec.backup.dynamics, Observed::Distribution(&children), gamma)?;
                Ok((q, leaf))
            }
        }
    }
}
