//! Root-state selection, trial budgets and trial depth rules.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::AccessHandle;
use crate::solution::Recommend;

/// How visited-set roots are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisitedSampling {
    Uniform,
    /// Most recently visited state first.
    Recency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RootKind {
    Ordered,
    ForwardSampling { recommend: Recommend },
    BackwardSampling { threshold: f64 },
    VisitedSet { sampling: VisitedSampling },
}

impl RootKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RootKind::BackwardSampling { threshold } if !(threshold >= 0.0 && threshold.is_finite()) => {
                Err(Error::Config(format!("ps.threshold must be a finite non-negative number, got {threshold}")))
            }
            _ => Ok(()),
        }
    }
}

/// Which residual drives an `UntilConvergence` budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualSource {
    /// Change of the root value over the last trial.
    Root,
    /// Largest value change anywhere in the last trial.
    TrialMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TrialBudget {
    FixedTrials { n: usize },
    UntilConvergence { tol: f64, source: ResidualSource },
    /// `cap` trials, defaulting to the number of actions.
    Exhaustive { cap: Option<usize> },
}

impl TrialBudget {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TrialBudget::FixedTrials { n: 0 } => Err(Error::Config("budget.trials must be at least 1".into())),
            TrialBudget::Exhaustive { cap: Some(0) } => Err(Error::Config("exhaustive cap must be at least 1".into())),
            TrialBudget::UntilConvergence { tol, .. } if !(tol > 0.0 && tol.is_finite()) => {
                Err(Error::Config(format!("budget.tol must be positive, got {tol}")))
            }
            _ => Ok(()),
        }
    }

    /// Upper bound on trials per root, `None` when it depends on convergence.
    pub fn max_trials(&self, n_actions: usize) -> Option<usize> {
        match *self {
            TrialBudget::FixedTrials { n } => Some(n),
            TrialBudget::Exhaustive { cap } => Some(cap.unwrap_or(n_actions)),
            TrialBudget::UntilConvergence { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DepthRule {
    Fixed { n: usize },
    /// Runs to a terminal state, cut at `cap` (default `10 * n_states`).
    Infinite { cap: Option<usize> },
    AdaptiveFrontier,
    AdaptiveDuplicate,
    /// Trial `i` from a root stops at depth `i + 1`, up to `d_max`.
    Ladder { d_max: usize },
}

impl DepthRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DepthRule::Fixed { n: 0 } => Err(Error::Config("depth.n must be at least 1".into())),
            DepthRule::Infinite { cap: Some(0) } => Err(Error::Config("depth.cap must be at least 1".into())),
            DepthRule::Ladder { d_max: 0 } => Err(Error::Config("depth.n must be at least 1".into())),
            _ => Ok(()),
        }
    }

    /// Hard limit on trial length for this rule.
    pub fn horizon(&self, n_states: usize, trial_index: usize) -> usize {
        let default_cap = 10 * n_states.max(1);
        match *self {
            DepthRule::Fixed { n } => n,
            DepthRule::Infinite { cap } => cap.unwrap_or(default_cap),
            DepthRule::Ladder { d_max } => (trial_index + 1).min(d_max),
            DepthRule::AdaptiveFrontier | DepthRule::AdaptiveDuplicate => default_cap,
        }
    }
}

/// What the depth rule may look at for the state about to be visited.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DepthProbe {
    pub depth: usize,
    /// The state has already appeared earlier in this trial.
    pub repeated: bool,
    /// The state's node is in the explored set.
    pub explored: bool,
    /// The trial has left the explored part of the local solution.
    pub crossed_frontier: bool,
    /// Trial index within the current root, for `Ladder`.
    pub trial_index: usize,
    pub n_states: usize,
}

/// True when the trial must stop and bootstrap at the probed state.
pub fn depth_reached(rule: DepthRule, probe: DepthProbe) -> bool {
    match rule {
        DepthRule::Fixed { n } => probe.depth >= n,
        DepthRule::Infinite { .. } | DepthRule::Ladder { .. } => {
            probe.depth >= rule.horizon(probe.n_states, probe.trial_index)
        }
        DepthRule::AdaptiveFrontier => {
            probe.crossed_frontier || probe.depth >= rule.horizon(probe.n_states, 0)
        }
        DepthRule::AdaptiveDuplicate => {
            (probe.depth > 0 && (probe.repeated || probe.explored))
                || probe.depth >= rule.horizon(probe.n_states, 0)
        }
    }
}

/// FixedTrials: `done < n`; UntilConvergence: at least once, then while the
/// residual exceeds the tolerance; Exhaustive: `done < cap`.
pub fn trials_remaining(budget: TrialBudget, trials_done: usize, residual: f64, n_actions: usize) -> bool {
    match budget {
        TrialBudget::FixedTrials { n } => trials_done < n,
        TrialBudget::Exhaustive { cap } => trials_done < cap.unwrap_or(n_actions),
        TrialBudget::UntilConvergence { tol, .. } => trials_done == 0 || residual > tol,
    }
}

/// Result of asking for the next root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextRoot {
    State(usize),
    Done,
}

/// Root strategy with its cursor, queue and visited-set state.
#[derive(Debug, Clone, PartialEq)]
pub struct RootStrategy {
    kind: RootKind,
    cursor: usize,
    priority: BTreeMap<usize, f64>,
    visited: BTreeSet<usize>,
    recent: Vec<usize>,
}

impl RootStrategy {
    pub fn new(kind: RootKind) -> Self {
        Self {
            kind,
            cursor: 0,
            priority: BTreeMap::new(),
            visited: BTreeSet::new(),
            recent: Vec::new(),
        }
    }

    pub fn kind(&self) -> RootKind {
        self.kind
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Ordered: state 0; ForwardSampling: a reset of the handle; other
    /// kinds draw from the initial distribution.
    pub fn first_root(&mut self, handle: &mut AccessHandle<'_>, rng: &mut impl Rng) -> usize {
        match self.kind {
            RootKind::Ordered => {
                self.cursor = 0;
                0
            }
            RootKind::ForwardSampling { .. } => handle.reset(),
            _ => sample_initial(handle, rng),
        }
    }

    /// Next root for the kinds that do not act in the environment.
    /// ForwardSampling roots come from executing an action and are produced
    /// by the engine.
    pub fn next_root(&mut self, n_states: usize, rng: &mut impl Rng) -> NextRoot {
        match self.kind {
            RootKind::Ordered => {
                self.cursor = (self.cursor + 1) % n_states.max(1);
                NextRoot::State(self.cursor)
            }
            RootKind::BackwardSampling { .. } => match self.pop_priority() {
                Some(s) => NextRoot::State(s),
                None => NextRoot::Done,
            },
            RootKind::VisitedSet { sampling } => match sampling {
                VisitedSampling::Uniform => {
                    if self.visited.is_empty() {
                        return NextRoot::Done;
                    }
                    let i = rng.random_range(0..self.visited.len());
                    NextRoot::State(*self.visited.iter().nth(i).expect("index in range"))
                }
                VisitedSampling::Recency => self.recent.last().map_or(NextRoot::Done, |&s| NextRoot::State(s)),
            },
            RootKind::ForwardSampling { .. } => NextRoot::Done,
        }
    }

    /// Remembers a state for visited-set sampling.
    pub fn mark_visited(&mut self, s: usize) {
        self.visited.insert(s);
        self.recent.retain(|&x| x != s);
        self.recent.push(s);
    }

    pub fn visited(&self) -> &BTreeSet<usize> {
        &self.visited
    }

    fn threshold(&self) -> f64 {
        match self.kind {
            RootKind::BackwardSampling { threshold } => threshold,
            _ => 0.0,
        }
    }

    /// Enqueues `s` itself with priority `delta`.
    pub fn push_state(&mut self, s: usize, delta: f64) {
        if delta > self.threshold() {
            let slot = self.priority.entry(s).or_insert(delta);
            *slot = slot.max(delta);
        }
    }

    /// Enqueues every predecessor `(s_prev, a, p)` of a changed state with
    /// priority `p * delta`, keeping the larger of old and new priorities.
    pub fn push_priority(&mut self, delta: f64, predecessors: &[(usize, usize, f64)]) {
        for &(s_prev, _, p) in predecessors {
            self.push_state(s_prev, p * delta);
        }
    }

    /// Removes the highest-priority state; ties go to the lowest state.
    pub fn pop_priority(&mut self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (&s, &p) in &self.priority {
            if best.is_none_or(|(_, b)| p > b) {
                best = Some((s, p));
            }
        }
        let (s, _) = best?;
        self.priority.remove(&s);
        Some(s)
    }

    pub fn priority_of(&self, s: usize) -> Option<f64> {
        self.priority.get(&s).copied()
    }

    pub fn queue_len(&self) -> usize {
        self.priority.len()
    }
}

/// Draws a state from the initial distribution with `rng`.
pub fn sample_initial(handle: &AccessHandle<'_>, rng: &mut impl Rng) -> usize {
    let initial = handle.source().initial();
    let i = crate::mdp::sample_index(rng, initial.iter().map(|&(_, p)| p));
    initial[i].0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{make_chain, stream_rng, AccessMode};

    #[test]
    fn ordered_wraps() {
        let mdp = make_chain(3, 0.9);
        let mut h = AccessHandle::new(&mdp, AccessMode::SettableDescriptive, 0);
        let mut rng = stream_rng(0, 1);
        let mut r = RootStrategy::new(RootKind::Ordered);
        let mut seen = vec![r.first_root(&mut h, &mut rng)];
        for _ in 0..4 {
            let NextRoot::State(s) = r.next_root(3, &mut rng) else { panic!() };
            seen.push(s);
        }
        assert_eq!(seen, vec![0, 1, 2, 0, 1]);
    }

    #[test]
    fn backward_sampling_pops_max() {
        let mut rng = stream_rng(0, 1);
        let mut r = RootStrategy::new(RootKind::BackwardSampling { threshold: 1e-5 });
        r.push_state(3, 0.5);
        r.push_state(1, 0.9);
        assert_eq!(r.next_root(5, &mut rng), NextRoot::State(1));
        assert_eq!(r.next_root(5, &mut rng), NextRoot::State(3));
        assert_eq!(r.next_root(5, &mut rng), NextRoot::Done);
    }

    #[test]
    fn push_priority_rules() {
        let mut r = RootStrategy::new(RootKind::BackwardSampling { threshold: 1e-5 });
        r.push_priority(1.0, &[(0, 0, 1.0)]);
        assert_eq!(r.priority_of(0), Some(1.0));
        r.push_priority(1e-6, &[(4, 0, 1.0)]);
        assert_eq!(r.queue_len(), 1);
        r.push_priority(0.3, &[(0, 1, 1.0)]);
        assert_eq!(r.priority_of(0), Some(1.0));
    }

    #[test]
    fn budget_examples() {
        assert!(!trials_remaining(TrialBudget::FixedTrials { n: 1 }, 1, 0.0, 2));
        let conv = TrialBudget::UntilConvergence { tol: 1e-6, source: ResidualSource::Root };
        assert!(!trials_remaining(conv, 3, 1e-7, 2));
        assert!(trials_remaining(conv, 0, 0.0, 2));
        assert!(trials_remaining(TrialBudget::Exhaustive { cap: None }, 1, 0.0, 2));
        assert!(!trials_remaining(TrialBudget::Exhaustive { cap: None }, 2, 0.0, 2));
    }

    #[test]
    fn depth_examples() {
        let probe = |depth| DepthProbe { depth, n_states: 3, ..DepthProbe::default() };
        assert!(depth_reached(DepthRule::Fixed { n: 1 }, probe(1)));
        assert!(!depth_reached(DepthRule::Infinite { cap: Some(100) }, probe(2)));
        assert!(depth_reached(DepthRule::Infinite { cap: None }, probe(30)));
        let fresh = DepthProbe { crossed_frontier: true, ..probe(1) };
        assert!(depth_reached(DepthRule::AdaptiveFrontier, fresh));
        assert!(!depth_reached(DepthRule::AdaptiveDuplicate, DepthProbe { repeated: true, ..probe(0) }));
        assert!(depth_reached(DepthRule::AdaptiveDuplicate, DepthProbe { repeated: true, ..probe(2) }));
        let ladder = DepthRule::Ladder { d_max: 3 };
        assert!(depth_reached(ladder, DepthProbe { trial_index: 0, ..probe(1) }));
        assert!(!depth_reached(ladder, DepthProbe { trial_index: 2, ..probe(2) }));
    }

    #[test]
    fn visited_set_sampling() {
        let mut rng = stream_rng(0, 1);
        let mut r = RootStrategy::new(RootKind::VisitedSet { sampling: VisitedSampling::Uniform });
        assert_eq!(r.next_root(5, &mut rng), NextRoot::Done);
        r.mark_visited(2);
        r.mark_visited(4);
        for _ in 0..20 {
            let NextRoot::State(s) = r.next_root(5, &mut rng) else { panic!() };
            assert!(s == 2 || s == 4);
        }
        let mut rec = RootStrategy::new(RootKind::VisitedSet { sampling: VisitedSampling::Recency });
        rec.mark_visited(1);
        rec.mark_visited(3);
        assert_eq!(rec.next_root(5, &mut rng), NextRoot::State(3));
    }
}
