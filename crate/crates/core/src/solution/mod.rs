//! Local and global solution stores plus the records a trial leaves behind.

mod global;
mod local;

pub use global::{init_global, Enabled, GlobalSolution, Prior, Snapshot};
pub use local::{init_local, LocalConfig, LocalSolution, Node, NodeGrowth, NodeId};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    Local,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionType {
    V,
    Q,
    Policy,
    ActorCritic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitScheme {
    Uniform { value: f64 },
    Random { seed: u64, scale: f64 },
    /// Constant upper bound; `None` derives `r_max / (1 - gamma)` (0 for SSPs).
    Optimistic { value: Option<f64> },
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionConfig {
    pub coverage: Coverage,
    #[serde(rename = "type")]
    pub kind: SolutionType,
    pub init: InitScheme,
}

impl SolutionConfig {
    pub fn global(kind: SolutionType, init: InitScheme) -> Self {
        Self {
            coverage: Coverage::Global,
            kind,
            init,
        }
    }

    pub fn local(kind: SolutionType, init: InitScheme) -> Self {
        Self {
            coverage: Coverage::Local,
            kind,
            init,
        }
    }
}

/// Which child a recommendation is based on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recommend {
    MaxValue,
    MaxCount,
}

/// One forward step of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub next: usize,
}

/// A linear trial: its steps, the leaf value and the cumulative return seen
/// from every offset (`return_estimates[depth]` is the leaf value itself).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub steps: Vec<Step>,
    pub depth: usize,
    pub bootstrap_value: f64,
    pub return_estimates: Vec<f64>,
}

impl TraceRecord {
    pub fn new(steps: Vec<Step>, bootstrap_value: f64, gamma: f64) -> Self {
        let depth = steps.len();
        let mut returns = vec![0.0; depth + 1];
        returns[depth] = bootstrap_value;
        for t in (0..depth).rev() {
            returns[t] = steps[t].r + gamma * returns[t + 1];
        }
        Self {
            steps,
            depth,
            bootstrap_value,
            return_estimates: returns,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    State,
    StateAction,
}

/// A fresh `V̂(s)` or `Q̂(s, a)` produced during a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackupEstimate {
    pub kind: EstimateKind,
    pub s: usize,
    pub a: Option<usize>,
    pub value: f64,
    pub source_depth: usize,
}

impl BackupEstimate {
    pub fn state(s: usize, value: f64, source_depth: usize) -> Self {
        Self {
            kind: EstimateKind::State,
            s,
            a: None,
            value,
            source_depth,
        }
    }

    pub fn state_action(s: usize, a: usize, value: f64, source_depth: usize) -> Self {
        Self {
            kind: EstimateKind::StateAction,
            s,
            a: Some(a),
            value,
            source_depth,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_returns_are_suffix_sums() {
        let steps = vec![
            Step { s: 0, a: 0, r: 1.0, next: 1 },
            Step { s: 1, a: 0, r: 2.0, next: 2 },
            Step { s: 2, a: 1, r: -1.0, next: 3 },
        ];
        let t = TraceRecord::new(steps, 4.0, 0.5);
        assert_eq!(t.depth, 3);
        assert_eq!(t.return_estimates, vec![1.0 + 0.5 * (2.0 + 0.5 * (-1.0 + 0.5 * 4.0)), 2.0 + 0.5 * (-1.0 + 2.0), -1.0 + 2.0, 4.0]);
    }
}
