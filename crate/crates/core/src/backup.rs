//! Bootstrap evaluation, one-step policy and dynamics back-ups, solved labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{AccessHandle, QueryResult, TransitionSource};
use crate::select::greedy_probs;
use crate::solution::{BackupEstimate, GlobalSolution, LocalSolution, NodeId, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table {
    V,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    State,
    StateAction,
}

/// Where heuristic values come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HeuristicSpec {
    /// Zero on SSPs, otherwise the optimistic bound `r_max / (1 - gamma)`.
    Default,
    Constant { value: f64 },
    Table { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BootstrapSpec {
    Zero,
    Heuristic { heuristic: HeuristicSpec },
    LearnedGlobal { table: Table },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub kind: BootstrapSpec,
    pub location: Location,
}

/// Resolved bootstrap function.
#[derive(Debug, Clone, PartialEq)]
pub enum BootstrapKind {
    Zero,
    Heuristic { values: Vec<f64>, admissible: bool },
    LearnedGlobal(Table),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapFn {
    pub kind: BootstrapKind,
    pub location: Location,
}

/// True when every transition of `source` pays a strictly negative reward.
pub fn is_ssp(source: &dyn TransitionSource) -> bool {
    let mut any = false;
    for s in (0..source.n_states()).filter(|&s| !source.is_terminal(s)) {
        for a in 0..source.n_actions() {
            let Ok(dist) = source.distribution(s, a) else { continue };
            for t in dist.iter() {
                any = true;
                if t.reward >= 0.0 {
                    return false;
                }
            }
        }
    }
    any
}

/// Upper bound on any state value: 0 on SSPs, `r_max / (1 - gamma)` when
/// discounted, `r_max * horizon` otherwise.
pub fn optimistic_bound(source: &dyn TransitionSource, horizon: usize) -> f64 {
    if is_ssp(source) {
        return 0.0;
    }
    let mut r_max = 0.0f64;
    for s in (0..source.n_states()).filter(|&s| !source.is_terminal(s)) {
        for a in 0..source.n_actions() {
            if let Ok(dist) = source.distribution(s, a) {
                r_max = dist.iter().map(|t| t.reward).fold(r_max, f64::max);
            }
        }
    }
    let gamma = source.gamma();
    if gamma < 1.0 {
        r_max / (1.0 - gamma)
    } else {
        r_max * horizon as f64
    }
}

impl BootstrapFn {
    pub fn zero(location: Location) -> Self {
        Self {
            kind: BootstrapKind::Zero,
            location,
        }
    }

    pub fn heuristic(values: Vec<f64>, admissible: bool) -> Self {
        Self {
            kind: BootstrapKind::Heuristic { values, admissible },
            location: Location::State,
        }
    }

    pub fn learned(table: Table, location: Location) -> Self {
        Self {
            kind: BootstrapKind::LearnedGlobal(table),
            location,
        }
    }

    /// Turns the configured bootstrap into lookup tables for `source`.
    pub fn resolve(config: &BootstrapConfig, source: &dyn TransitionSource, horizon: usize) -> Result<Self> {
        let kind = match &config.kind {
            BootstrapSpec::Zero => BootstrapKind::Zero,
            BootstrapSpec::LearnedGlobal { table } => BootstrapKind::LearnedGlobal(*table),
            BootstrapSpec::Heuristic { heuristic } => {
                let n = source.n_states();
                let (values, admissible) = match heuristic {
                    HeuristicSpec::Default => (vec![optimistic_bound(source, horizon); n], true),
                    HeuristicSpec::Constant { value } => (vec![*value; n], false),
                    HeuristicSpec::Table { values } => {
                        if values.len() != n {
                            return Err(Error::MissingHeuristicEntry(values.len().min(n)));
                        }
                        (values.clone(), false)
                    }
                };
                BootstrapKind::Heuristic { values, admissible }
            }
        };
        Ok(Self {
            kind,
            location: config.location,
        })
    }

    pub fn heuristic_values(&self) -> Option<&[f64]> {
        match &self.kind {
            BootstrapKind::Heuristic { values, .. } => Some(values),
            _ => None,
        }
    }

    /// Quick value estimate of `s` (or `(s, a)`); terminal states are worth 0.
    pub fn bootstrap(
        &self,
        s: usize,
        a: Option<usize>,
        global: &GlobalSolution,
        source: &dyn TransitionSource,
    ) -> Result<f64> {
        if source.is_terminal(s) {
            return Ok(0.0);
        }
        match (&self.kind, a) {
            (BootstrapKind::Zero, _) => Ok(0.0),
            (BootstrapKind::Heuristic { values, .. }, _) => {
                values.get(s).copied().ok_or(Error::MissingHeuristicEntry(s))
            }
            (BootstrapKind::LearnedGlobal(Table::V), _) => Ok(global.v(s)),
            (BootstrapKind::LearnedGlobal(Table::Q), Some(a)) => Ok(global.q(s, a)),
            (BootstrapKind::LearnedGlobal(Table::Q), None) => Ok(global.state_value(s)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyBackup {
    OnPolicySample,
    /// Expectation under the behaviour policy's action distribution.
    Expected,
    GreedyMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsBackup {
    Sample,
    Expected,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extras {
    pub counts: bool,
    pub labels: bool,
    pub priorities: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackupOp {
    pub policy: PolicyBackup,
    pub dynamics: DynamicsBackup,
    pub extras: Extras,
}

/// `V̂(s)` from the child values. Missing children are `None`.
pub fn policy_backup(
    kind: PolicyBackup,
    q_children: &[Option<f64>],
    chosen: Option<usize>,
    probs: Option<&[f64]>,
) -> Result<f64> {
    match kind {
        PolicyBackup::OnPolicySample => {
            let a = chosen.ok_or(Error::MissingChild(0))?;
            q_children
                .get(a)
                .copied()
                .flatten()
                .ok_or(Error::MissingChild(a))
        }
        PolicyBackup::Expected => {
            let probs = probs.ok_or_else(|| Error::Config("expected back-up needs policy probabilities".into()))?;
            let mass: f64 = probs.iter().sum();
            if (mass - 1.0).abs() > 1e-9 || probs.len() != q_children.len() {
                return Err(Error::Config(format!("policy probabilities sum to {mass}")));
            }
            let mut acc = 0.0;
            for (a, (&p, q)) in probs.iter().zip(q_children).enumerate() {
                if p == 0.0 {
                    continue;
                }
                acc += p * q.ok_or(Error::MissingChild(a))?;
            }
            Ok(acc)
        }
        PolicyBackup::GreedyMax => q_children
            .iter()
            .flatten()
            .copied()
            .reduce(f64::max)
            .ok_or(Error::MissingChild(0)),
    }
}

/// What a dynamics back-up sees of the next state(s).
#[derive(Debug, Clone, Copy)]
pub enum Observed<'a> {
    Sample { reward: f64, v_next: f64 },
    /// `(probability, reward, V̂(s'))` per child, in stored order.
    Distribution(&'a [(f64, f64, f64)]),
}

/// `Q̂(s, a)` from one sampled child or from the full distribution.
pub fn dynamics_backup(kind: DynamicsBackup, observed: Observed<'_>, gamma: f64) -> Result<f64> {
    match (kind, observed) {
        (DynamicsBackup::Sample, Observed::Sample { reward, v_next }) => Ok(reward + gamma * v_next),
        (DynamicsBackup::Expected, Observed::Distribution(children)) => {
            let mut acc = 0.0;
            for &(p, r, v) in children {
                acc += p * (r + gamma * v);
            }
            Ok(acc)
        }
        (DynamicsBackup::Expected, Observed::Sample { .. }) => {
            Err(Error::DistributionRequired("expected dynamics back-up"))
        }
        (DynamicsBackup::Sample, Observed::Distribution(_)) => Err(Error::Config(
            "sample dynamics back-up takes one observed transition".into(),
        )),
    }
}

/// Value of a child for policy back-ups: the local aggregate when the action
/// has been tried at `node`, otherwise the bootstrap fallback.
pub fn child_values(
    node: Option<(&LocalSolution, NodeId)>,
    s: usize,
    bootstrap: &BootstrapFn,
    global: &GlobalSolution,
    source: &dyn TransitionSource,
) -> Result<Vec<f64>> {
    (0..source.n_actions())
        .map(|a| match node {
            Some((local, id)) if local.node(id).tried(a) => Ok(local.node(id).q[a]),
            _ => bootstrap.bootstrap(s, Some(a), global, source),
        })
        .collect()
}

/// Back-up chain of a linear trace, deepest first: for every step one
/// state-action estimate then one state estimate. Steps are single samples,
/// so the dynamics back-up is always `Sample`; `Expected` policy back-ups
/// weigh actions greedily.
pub fn walk_back(
    trace: &TraceRecord,
    op: &BackupOp,
    bootstrap: &BootstrapFn,
    local: &LocalSolution,
    global: &GlobalSolution,
    source: &dyn TransitionSource,
) -> Result<Vec<BackupEstimate>> {
    let gamma = source.gamma();
    let mut out = Vec::with_capacity(2 * trace.depth);
    let mut v_next = match trace.steps.last() {
        Some(last) if source.is_terminal(last.next) => 0.0,
        Some(last) => bootstrap.bootstrap(last.next, None, global, source)?,
        None => return Ok(out),
    };
    for (t, step) in trace.steps.iter().enumerate().rev() {
        let depth = trace.depth - t;
        let q_hat = dynamics_backup(DynamicsBackup::Sample, Observed::Sample { reward: step.r, v_next }, gamma)?;
        out.push(BackupEstimate::state_action(step.s, step.a, q_hat, depth));
        let node = local.node_of_state(step.s).map(|id| (local, id));
        let mut values: Vec<Option<f64>> = child_values(node, step.s, bootstrap, global, source)?
            .into_iter()
            .map(Some)
            .collect();
        values[step.a] = Some(q_hat);
        let plain: Vec<f64> = values.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
        let probs = greedy_probs(&plain);
        let v_hat = policy_backup(op.policy, &values, Some(step.a), Some(&probs))?;
        out.push(BackupEstimate::state(step.s, v_hat, depth));
        v_next = v_hat;
    }
    Ok(out)
}

/// Shared state for the labeling procedure.
pub struct LabelContext<'a, 'h> {
    pub local: &'a mut LocalSolution,
    pub global: &'a mut GlobalSolution,
    pub bootstrap: &'a BootstrapFn,
    pub handle: &'a mut AccessHandle<'h>,
}

impl LabelContext<'_, '_> {
    fn value(&self, s: usize) -> Result<f64> {
        if self.handle.is_terminal(s) {
            return Ok(0.0);
        }
        match self.local.node_of_state(s) {
            Some(id) => Ok(self.local.node(id).v),
            None => self
                .bootstrap
                .bootstrap(s, None, self.global, self.handle.source()),
        }
    }

    fn is_solved(&self, s: usize) -> bool {
        self.handle.is_terminal(s)
            || self.global.is_solved(s)
            || self
                .local
                .node_of_state(s)
                .is_some_and(|id| self.local.node(id).solved)
    }

    /// `(max_a Q(s, a), greedy action, children of the greedy action)`.
    fn bellman(&mut self, s: usize) -> Result<(f64, Vec<usize>)> {
        let gamma = self.handle.gamma();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for a in 0..self.handle.n_actions() {
            let QueryResult::Distribution(dist) = self.handle.query_descriptive(s, a)? else {
                unreachable!("descriptive query returned a sample")
            };
            let mut children = Vec::with_capacity(dist.len());
            for t in &dist {
                children.push((t.prob, t.reward, self.value(t.next)?));
            }
            let q = dynamics_backup(DynamicsBackup::Expected, Observed::Distribution(&children), gamma)?;
            if best.as_ref().is_none_or(|(b, _)| q > *b) {
                best = Some((q, dist.iter().map(|t| t.next).collect()));
            }
        }
        Ok(best.expect("at least one action"))
    }

    fn write_value(&mut self, s: usize, v: f64) {
        let id = match self.local.node_of_state(s) {
            Some(id) => id,
            None => {
                let n = self.local.n_actions();
                self.local.insert(s, None, v, vec![v; n])
            }
        };
        let node = self.local.node_mut(id);
        node.v = v;
        node.backed_up = true;
    }

    fn label(&mut self, s: usize) {
        if let Some(id) = self.local.node_of_state(s) {
            self.local.node_mut(id).solved = true;
        }
        self.global.mark_solved(s);
    }
}

/// Residual test over the greedy envelope of `s`. On success every visited
/// state is labeled solved (locally and globally); on failure the visited
/// states receive a Bellman update in reverse visiting order.
pub fn check_solved(s: usize, tol: f64, ctx: &mut LabelContext<'_, '_>) -> Result<bool> {
    if !ctx.handle.mode().is_descriptive() {
        return Err(Error::WrongAccessMode {
            operation: "check_solved",
            mode: ctx.handle.mode(),
        });
    }
    if ctx.handle.is_terminal(s) {
        ctx.global.mark_solved(s);
        return Ok(true);
    }
    let mut ok = true;
    let mut open = Vec::new();
    let mut closed: Vec<usize> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    if !ctx.is_solved(s) {
        open.push(s);
        seen.insert(s);
    }
    while let Some(x) = open.pop() {
        closed.push(x);
        let (best, children) = ctx.bellman(x)?;
        if (best - ctx.value(x)?).abs() > tol {
            ok = false;
            continue;
        }
        for c in children {
            if !ctx.is_solved(c) && seen.insert(c) {
                open.push(c);
            }
        }
    }
    if ok {
        for &x in &closed {
            ctx.label(x);
        }
    } else {
        while let Some(x) = closed.pop() {
            let (best, _) = ctx.bellman(x)?;
            ctx.write_value(x, best);
        }
    }
    Ok(ok)
}
