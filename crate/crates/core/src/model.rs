//! Maximum-likelihood tabular dynamics learned from real transitions.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::mdp::{emit_mdp_with_comment, AccessHandle, AccessMode, MdpBuilder, QueryResult, Transition, TransitionSource};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Outcome {
    count: u64,
    reward_sum: f64,
}

/// Counts of observed `(s, a, s')` outcomes with their rewards, plus the
/// reverse map used for predecessor lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedTabularModel {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    outcomes: BTreeMap<(usize, usize), BTreeMap<usize, Outcome>>,
    totals: BTreeMap<(usize, usize), u64>,
    reverse: BTreeMap<usize, BTreeSet<(usize, usize)>>,
    terminals_seen: BTreeSet<usize>,
    starts: BTreeMap<usize, u64>,
}

impl LearnedTabularModel {
    pub fn new(n_states: usize, n_actions: usize, gamma: f64) -> Self {
        Self {
            n_states,
            n_actions,
            gamma,
            outcomes: BTreeMap::new(),
            totals: BTreeMap::new(),
            reverse: BTreeMap::new(),
            terminals_seen: BTreeSet::new(),
            starts: BTreeMap::new(),
        }
    }

    pub fn observe(&mut self, s: usize, a: usize, next: usize, reward: f64, terminal: bool) {
        let o = self.outcomes.entry((s, a)).or_default().entry(next).or_default();
        o.count += 1;
        o.reward_sum += reward;
        *self.totals.entry((s, a)).or_default() += 1;
        self.reverse.entry(next).or_default().insert((s, a));
        if terminal {
            self.terminals_seen.insert(next);
        }
    }

    /// Records a state drawn from the initial distribution.
    pub fn observe_start(&mut self, s: usize) {
        *self.starts.entry(s).or_default() += 1;
    }

    pub fn total(&self, s: usize, a: usize) -> u64 {
        self.totals.get(&(s, a)).copied().unwrap_or(0)
    }

    pub fn is_visited(&self, s: usize, a: usize) -> bool {
        self.total(s, a) > 0
    }

    /// States with at least one observed action.
    pub fn visited_states(&self) -> BTreeSet<usize> {
        self.totals.keys().map(|&(s, _)| s).collect()
    }

    /// `p̂(s'|s,a) = count / total` and mean rewards, in increasing `s'` order.
    pub fn estimate(&self, s: usize, a: usize) -> Result<QueryResult> {
        Ok(QueryResult::Distribution(self.estimate_transitions(s, a)?))
    }

    fn estimate_transitions(&self, s: usize, a: usize) -> Result<Vec<Transition>> {
        let total = self.total(s, a);
        let outcomes = self.outcomes.get(&(s, a)).filter(|_| total > 0).ok_or(Error::UnvisitedPair(s, a))?;
        Ok(outcomes
            .iter()
            .map(|(&next, o)| Transition::new(next, o.count as f64 / total as f64, o.reward_sum / o.count as f64))
            .collect())
    }

    /// Observed pairs `(s, a)` leading to `next`, with `p̂(next|s,a)`.
    pub fn predecessors(&self, next: usize) -> Vec<(usize, usize, f64)> {
        let Some(pairs) = self.reverse.get(&next) else { return Vec::new() };
        pairs
            .iter()
            .map(|&(s, a)| {
                let c = self.outcomes[&(s, a)][&next].count;
                (s, a, c as f64 / self.total(s, a) as f64)
            })
            .collect()
    }

    /// Settable descriptive view answering from the estimates.
    pub fn as_handle(&self, seed: u64) -> AccessHandle<'_> {
        AccessHandle::new(self, AccessMode::SettableDescriptive, seed)
    }

    /// Dump in the MDP text format. Unobserved pairs become self-loops with
    /// reward 0 so the file stays loadable.
    pub fn to_text(&self) -> Result<String> {
        let mut b = MdpBuilder::new(self.n_states, self.n_actions, self.gamma);
        for &t in &self.terminals_seen {
            b.terminal(t);
        }
        for s in (0..self.n_states).filter(|s| !self.terminals_seen.contains(s)) {
            for a in 0..self.n_actions {
                match self.estimate_transitions(s, a) {
                    Ok(dist) => {
                        for t in dist {
                            b.transition(s, a, t.next, t.prob, t.reward);
                        }
                    }
                    Err(_) => {
                        b.transition(s, a, s, 1.0, 0.0);
                    }
                }
            }
        }
        let starts = self.initial();
        for &(s, p) in starts.iter() {
            b.initial(s, p);
        }
        Ok(emit_mdp_with_comment(&b.build()?, Some("learned")))
    }

    /// Support of `counts` transposed, rebuilt from scratch.
    pub fn check_invariants(&self) -> bool {
        let mut rebuilt: BTreeMap<usize, BTreeSet<(usize, usize)>> = BTreeMap::new();
        for (&(s, a), outs) in &self.outcomes {
            let sum: u64 = outs.values().map(|o| o.count).sum();
            if sum != self.total(s, a) {
                return false;
            }
            for &next in outs.keys() {
                rebuilt.entry(next).or_default().insert((s, a));
            }
        }
        rebuilt == self.reverse
    }
}

impl TransitionSource for LearnedTabularModel {
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
        self.terminals_seen.contains(&s)
    }

    fn initial(&self) -> Cow<'_, [(usize, f64)]> {
        let total: u64 = self.starts.values().sum();
        if total == 0 {
            return Cow::Owned(vec![(0, 1.0)]);
        }
        Cow::Owned(self.starts.iter().map(|(&s, &c)| (s, c as f64 / total as f64)).collect())
    }

    fn distribution(&self, s: usize, a: usize) -> Result<Cow<'_, [Transition]>> {
        self.estimate_transitions(s, a).map(Cow::Owned)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{load_mdp, make_chain, ACTION_RIGHT};

    #[test]
    fn count_ratios() {
        let mut m = LearnedTabularModel::new(3, 1, 0.9);
        for next in [1, 1, 1, 2] {
            m.observe(0, 0, next, 1.0, false);
        }
        let QueryResult::Distribution(d) = m.estimate(0, 0).unwrap() else { panic!() };
        assert_eq!(d.iter().map(|t| t.prob).collect::<Vec<_>>(), vec![0.75, 0.25]);
        assert!(m.check_invariants());
    }

    #[test]
    fn single_observation_is_point_mass() {
        let mut m = LearnedTabularModel::new(3, 2, 0.9);
        m.observe(0, ACTION_RIGHT, 1, 0.0, false);
        assert_eq!(m.estimate(0, ACTION_RIGHT).unwrap(), QueryResult::Distribution(vec![Transition::new(1, 1.0, 0.0)]));
        assert_eq!(m.estimate(0, 1), Err(Error::UnvisitedPair(0, 1)));
        assert_eq!(m.predecessors(1), vec![(0, ACTION_RIGHT, 1.0)]);
        assert!(m.predecessors(2).is_empty());
    }

    #[test]
    fn reward_means() {
        let mut m = LearnedTabularModel::new(2, 1, 0.9);
        m.observe(0, 0, 1, 1.0, true);
        m.observe(0, 0, 1, 3.0, true);
        let QueryResult::Distribution(d) = m.estimate(0, 0).unwrap() else { panic!() };
        assert_eq!(d, vec![Transition::new(1, 1.0, 2.0)]);
        assert!(m.is_terminal(1));
    }

    #[test]
    fn deterministic_mdp_is_reproduced() {
        let mdp = make_chain(4, 0.9);
        let mut m = LearnedTabularModel::new(4, 2, 0.9);
        for s in 0..4 {
            for a in 0..2 {
                for t in mdp.transitions(s, a) {
                    m.observe(s, a, t.next, t.reward, mdp.is_terminal(t.next));
                }
            }
        }
        let mut h = m.as_handle(0);
        let mut truth = AccessHandle::new(&mdp, AccessMode::SettableDescriptive, 0);
        for s in 0..3 {
            for a in 0..2 {
                assert_eq!(h.query_descriptive(s, a).unwrap(), truth.query_descriptive(s, a).unwrap());
            }
        }
        let text = m.to_text().unwrap();
        assert!(text.starts_with("# learned"));
        assert_eq!(load_mdp(&text).unwrap().transitions(1, 0), mdp.transitions(1, 0));
    }
}
