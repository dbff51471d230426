//! Ground-truth tabular MDPs, capability-restricted access handles, the
//! built-in benchmark environments and the line-based MDP text format.
//!
//! Rewards live on transitions `R(s, a, s')`. Terminal states are absorbing
//! and carry no outgoing entries; every non-terminal `(s, a)` pair has a
//! distribution that sums to one.

mod access;
pub mod envs;
mod format;

pub(crate) use access::sample_index;
pub use access::{stream_rng, AccessHandle, AccessMode, QueryResult, TransitionSource};
pub use envs::{
    builtin, builtin_names, make_chain, make_decision_tree, make_gridworld,
    make_ssp_racetrack_small, split_mdp, ACTION_LEFT, ACTION_RIGHT,
};
pub use format::{emit_mdp, emit_mdp_with_comment, format_g17, load_mdp};

use std::borrow::Cow;
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Tolerance on probability mass for distributions read from disk or built in code.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// One outcome of a state-action pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

impl Transition {
    pub fn new(next: usize, prob: f64, reward: f64) -> Self {
        Self { next, prob, reward }
    }
}

/// A fully known finite MDP. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    transitions: Vec<Vec<Transition>>,
    terminal: Vec<bool>,
    initial: Vec<(usize, f64)>,
}

impl TabularMdp {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Outcomes of `(s, a)` in stored order; empty for terminal states.
    pub fn transitions(&self, s: usize, a: usize) -> &[Transition] {
        &self.transitions[s * self.n_actions + a]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminals(&self) -> impl Iterator<Item = usize> + '_ {
        self.terminal
            .iter()
            .enumerate()
            .filter_map(|(s, &t)| t.then_some(s))
    }

    pub fn initial(&self) -> &[(usize, f64)] {
        &self.initial
    }

    /// Largest reward on any transition (0 for an MDP without transitions).
    pub fn r_max(&self) -> f64 {
        self.transitions
            .iter()
            .flatten()
            .map(|t| t.reward)
            .reduce(f64::max)
            .unwrap_or(0.0)
    }

    fn has_transitions(&self) -> bool {
        self.transitions.iter().any(|ts| !ts.is_empty())
    }

    /// True when every transition carries a strictly negative reward.
    pub fn is_ssp(&self) -> bool {
        self.has_transitions() && self.transitions.iter().flatten().all(|t| t.reward < 0.0)
    }

    /// Predecessors of `s'` as `(s, a, p(s'|s,a))`, in `(s, a)` order.
    pub fn predecessors(&self, next: usize) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for t in self.transitions(s, a) {
                    if t.next == next {
                        out.push((s, a, t.prob));
                    }
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::Validation(
                "index out of range: an MDP needs at least one state and one action".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Validation(format!(
                "discount: gamma {} outside [0, 1]",
                self.gamma
            )));
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let ts = self.transitions(s, a);
                if self.terminal[s] {
                    if !ts.is_empty() {
                        return Err(Error::Validation(format!(
                            "terminal transitions: terminal state {s} has outgoing entries"
                        )));
                    }
                    continue;
                }
                let mut mass = 0.0;
                for t in ts {
                    if t.next >= self.n_states {
                        return Err(Error::Validation(format!(
                            "index out of range: next state {} of ({s}, {a})",
                            t.next
                        )));
                    }
                    if !(t.prob > 0.0) || !t.prob.is_finite() {
                        return Err(Error::Validation(format!(
                            "positive probability: ({s}, {a}) -> {} has p = {}",
                            t.next, t.prob
                        )));
                    }
                    if !t.reward.is_finite() {
                        return Err(Error::Validation(format!(
                            "finite reward: ({s}, {a}) -> {} has r = {}",
                            t.next, t.reward
                        )));
                    }
                    mass += t.prob;
                }
                if (mass - 1.0).abs() > MASS_TOLERANCE {
                    return Err(Error::Validation(format!(
                        "probability mass: P(.|{s},{a}) sums to {mass}"
                    )));
                }
            }
        }
        let mut mass = 0.0;
        for &(s, p) in &self.initial {
            if s >= self.n_states {
                return Err(Error::Validation(format!(
                    "index out of range: initial state {s}"
                )));
            }
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::Validation(format!(
                    "positive probability: initial state {s} has p = {p}"
                )));
            }
            mass += p;
        }
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Validation(format!(
                "initial distribution: probabilities sum to {mass}"
            )));
        }
        Ok(())
    }
}

impl TransitionSource for TabularMdp {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    fn initial(&self) -> Cow<'_, [(usize, f64)]> {
        Cow::Borrowed(&self.initial)
    }

    fn distribution(&self, s: usize, a: usize) -> Result<Cow<'_, [Transition]>> {
        Ok(Cow::Borrowed(self.transitions(s, a)))
    }
}

/// Incremental constructor used by the environments and the file loader.
///
/// Repeated entries for the same `(s, a, s')` are merged on `build`:
/// probabilities add up and rewards become the probability-weighted mean.
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    entries: Vec<Vec<Transition>>,
    terminal: Vec<bool>,
    initial: BTreeMap<usize, f64>,
    out_of_range: Option<String>,
}

impl MdpBuilder {
    pub fn new(n_states: usize, n_actions: usize, gamma: f64) -> Self {
        Self {
            n_states,
            n_actions,
            gamma,
            entries: vec![Vec::new(); n_states * n_actions],
            terminal: vec![false; n_states],
            initial: BTreeMap::new(),
            out_of_range: None,
        }
    }

    fn check(&mut self, what: &str, idx: usize, bound: usize) -> bool {
        if idx >= bound {
            if self.out_of_range.is_none() {
                self.out_of_range = Some(format!("index out of range: {what} {idx}"));
            }
            false
        } else {
            true
        }
    }

    pub fn transition(&mut self, s: usize, a: usize, next: usize, prob: f64, reward: f64) -> &mut Self {
        let ok = self.check("state", s, self.n_states)
            & self.check("action", a, self.n_actions)
            & self.check("next state", next, self.n_states);
        if ok {
            self.entries[s * self.n_actions + a].push(Transition::new(next, prob, reward));
        }
        self
    }

    pub fn terminal(&mut self, s: usize) -> &mut Self {
        if self.check("terminal state", s, self.n_states) {
            self.terminal[s] = true;
        }
        self
    }

    pub fn initial(&mut self, s: usize, prob: f64) -> &mut Self {
        if self.check("initial state", s, self.n_states) {
            *self.initial.entry(s).or_insert(0.0) += prob;
        }
        self
    }

    pub fn build(&self) -> Result<TabularMdp> {
        if let Some(msg) = &self.out_of_range {
            return Err(Error::Validation(msg.clone()));
        }
        let mut transitions = Vec::with_capacity(self.entries.len());
        for (idx, entries) in self.entries.iter().enumerate() {
            let mut merged: Vec<Transition> = Vec::with_capacity(entries.len());
            for t in entries {
                match merged.iter_mut().find(|m| m.next == t.next) {
                    Some(m) => {
                        log::warn!(
                            "merging duplicate transition ({}, {}) -> {}",
                            idx / self.n_actions,
                            idx % self.n_actions,
                            t.next
                        );
                        let total = m.prob + t.prob;
                        m.reward = (m.prob * m.reward + t.prob * t.reward) / total;
                        m.prob = total;
                    }
                    None => merged.push(*t),
                }
            }
            transitions.push(merged);
        }
        let mdp = TabularMdp {
            n_states: self.n_states,
            n_actions: self.n_actions,
            gamma: self.gamma,
            transitions,
            terminal: self.terminal.clone(),
            initial: self.initial.iter().map(|(&s, &p)| (s, p)).collect(),
        };
        mdp.validate()?;
        Ok(mdp)
    }
}
