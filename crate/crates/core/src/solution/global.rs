use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{InitScheme, SolutionConfig, SolutionType};
use crate::error::{Error, Result};
use crate::mdp::stream_rng;

/// Which tables a configuration maintains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enabled {
    pub v: bool,
    pub q: bool,
    pub policy: bool,
}

impl Enabled {
    pub fn for_type(kind: SolutionType) -> Self {
        match kind {
            SolutionType::V => Enabled { v: true, q: false, policy: false },
            SolutionType::Q => Enabled { v: false, q: true, policy: false },
            SolutionType::Policy => Enabled { v: false, q: false, policy: true },
            SolutionType::ActorCritic => Enabled { v: true, q: false, policy: true },
        }
    }
}

/// Environment-derived constants needed by some initialization schemes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Prior {
    /// Default optimistic constant.
    pub optimistic: f64,
    /// Per-state heuristic values, when the configuration provides them.
    pub heuristic: Option<Vec<f64>>,
}

/// Persistent tabular tables shared across roots.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSolution {
    n_states: usize,
    n_actions: usize,
    enabled: Enabled,
    v: Vec<f64>,
    q: Vec<f64>,
    logits: Vec<f64>,
    counts_s: Vec<u64>,
    counts_sa: Vec<u64>,
    solved: Vec<bool>,
}

/// JSON-friendly copy of the global tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub policy: Vec<Vec<f64>>,
    pub counts: Counts,
    pub solved: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub s: Vec<u64>,
    pub sa: Vec<Vec<u64>>,
}

/// Allocates the tables named by `config.kind` and fills them per `config.init`.
pub fn init_global(
    config: &SolutionConfig,
    n_states: usize,
    n_actions: usize,
    prior: &Prior,
) -> Result<GlobalSolution> {
    let enabled = Enabled::for_type(config.kind);
    let heuristic = match config.init {
        InitScheme::Heuristic => Some(prior.heuristic.as_ref().ok_or_else(|| {
            Error::UnsupportedInit("heuristic initialization needs a heuristic bootstrap".into())
        })?),
        _ => None,
    };
    if let Some(h) = heuristic {
        if h.len() != n_states {
            return Err(Error::UnsupportedInit(format!(
                "heuristic has {} entries for {n_states} states",
                h.len()
            )));
        }
    }
    let mut rng = match config.init {
        InitScheme::Random { seed, .. } => Some(stream_rng(seed, 0x1417)),
        _ => None,
    };
    let mut fill = |len: usize, per_state: usize, values: bool| -> Vec<f64> {
        (0..len)
            .map(|i| match config.init {
                InitScheme::Uniform { value } if values => value,
                InitScheme::Optimistic { value } if values => value.unwrap_or(prior.optimistic),
                InitScheme::Heuristic if values => heuristic.expect("checked above")[i / per_state],
                InitScheme::Random { scale, .. } => {
                    let u: f64 = rng.as_mut().expect("seeded above").random();
                    scale * (2.0 * u - 1.0)
                }
                _ => 0.0,
            })
            .collect()
    };
    let v = if enabled.v { fill(n_states, 1, true) } else { Vec::new() };
    let q = if enabled.q { fill(n_states * n_actions, n_actions, true) } else { Vec::new() };
    let logits = if enabled.policy { fill(n_states * n_actions, n_actions, false) } else { Vec::new() };
    Ok(GlobalSolution {
        n_states,
        n_actions,
        enabled,
        v,
        q,
        logits,
        counts_s: vec![0; n_states],
        counts_sa: vec![0; n_states * n_actions],
        solved: vec![false; n_states],
    })
}

impl GlobalSolution {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn enabled(&self) -> Enabled {
        self.enabled
    }

    pub fn v(&self, s: usize) -> f64 {
        self.v[s]
    }

    pub fn set_v(&mut self, s: usize, value: f64) {
        self.v[s] = value;
    }

    pub fn v_table(&self) -> &[f64] {
        &self.v
    }

    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    pub fn set_q(&mut self, s: usize, a: usize, value: f64) {
        self.q[s * self.n_actions + a] = value;
    }

    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn q_table(&self) -> &[f64] {
        &self.q
    }

    pub fn logits(&self, s: usize) -> &[f64] {
        &self.logits[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn logits_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.logits[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn logits_table(&self) -> &[f64] {
        &self.logits
    }

    /// Softmax of the logits at `s`, stabilized by the row maximum.
    pub fn policy_probs(&self, s: usize) -> Vec<f64> {
        let row = self.logits(s);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|x| x / z).collect()
    }

    /// Best available state value: `V` when kept, else `max_a Q`, else 0.
    pub fn state_value(&self, s: usize) -> f64 {
        if self.enabled.v {
            self.v(s)
        } else if self.enabled.q {
            self.q_row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
        } else {
            0.0
        }
    }

    /// Lowest-index argmax of `Q(s, .)`.
    pub fn greedy_action(&self, s: usize) -> usize {
        let row = self.q_row(s);
        let mut best = 0;
        for (a, &q) in row.iter().enumerate() {
            if q > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn count_s(&self, s: usize) -> u64 {
        self.counts_s[s]
    }

    pub fn count_sa(&self, s: usize, a: usize) -> u64 {
        self.counts_sa[s * self.n_actions + a]
    }

    pub fn counts_sa_row(&self, s: usize) -> &[u64] {
        &self.counts_sa[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn add_visit(&mut self, s: usize, a: usize, n: u64) {
        self.counts_s[s] += n;
        self.counts_sa[s * self.n_actions + a] += n;
    }

    pub fn is_solved(&self, s: usize) -> bool {
        self.solved[s]
    }

    pub fn mark_solved(&mut self, s: usize) {
        self.solved[s] = true;
    }

    pub fn solved_states(&self) -> Vec<usize> {
        (0..self.n_states).filter(|&s| self.solved[s]).collect()
    }

    /// True when any maintained table holds NaN or an infinity.
    pub fn has_non_finite(&self) -> bool {
        self.v.iter().chain(&self.q).chain(&self.logits).any(|x| !x.is_finite())
    }

    pub fn snapshot(&self) -> Snapshot {
        let rows = |t: &[f64]| -> Vec<Vec<f64>> {
            if t.is_empty() {
                Vec::new()
            } else {
                t.chunks(self.n_actions).map(<[f64]>::to_vec).collect()
            }
        };
        let policy = if self.enabled.policy {
            (0..self.n_states).map(|s| self.policy_probs(s)).collect()
        } else {
            Vec::new()
        };
        Snapshot {
            v: self.v.clone(),
            q: rows(&self.q),
            policy,
            counts: Counts {
                s: self.counts_s.clone(),
                sa: self.counts_sa.chunks(self.n_actions.max(1)).map(<[u64]>::to_vec).collect(),
            },
            solved: self.solved_states(),
        }
    }
}
