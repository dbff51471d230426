//! Brute-force reference solvers. They read the transition tables directly
//! and share no back-up or update code with the engine.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{stream_rng, TabularMdp};
use crate::parallel::fan_out;

/// Hard cap on oracle sweeps.
pub const ORACLE_MAX_SWEEPS: usize = 1_000_000;

/// Relative slack used to collect every argmax action.
const ARGMAX_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Every state reads the previous sweep's table.
    Jacobi,
    /// States are updated in place in index order.
    GaussSeidel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub v_star: Vec<f64>,
    /// Row per state.
    pub q_star: Vec<Vec<f64>>,
    /// All argmax actions per state; empty for terminals.
    pub optimal_policy: Vec<Vec<usize>>,
    pub iterations: usize,
    pub residual: f64,
}

impl OracleResult {
    pub fn is_optimal(&self, s: usize, a: usize) -> bool {
        self.optimal_policy[s].is_empty() || self.optimal_policy[s].contains(&a)
    }
}

fn q_value(mdp: &TabularMdp, v: &[f64], s: usize, a: usize) -> f64 {
    let mut total = 0.0;
    for t in mdp.transitions(s, a) {
        total += t.prob * (t.reward + mdp.gamma() * v[t.next]);
    }
    total
}

fn best_q(mdp: &TabularMdp, v: &[f64], s: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for a in 0..mdp.n_actions() {
        best = best.max(q_value(mdp, v, s, a));
    }
    best
}

fn finish(mdp: &TabularMdp, v: Vec<f64>, iterations: usize, residual: f64) -> OracleResult {
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut q_star = vec![vec![0.0; m]; n];
    let mut optimal_policy = vec![Vec::new(); n];
    for s in (0..n).filter(|&s| !mdp.is_terminal(s)) {
        for a in 0..m {
            q_star[s][a] = q_value(mdp, &v, s, a);
        }
        let best = q_star[s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slack = ARGMAX_SLACK * best.abs().max(1.0);
        optimal_policy[s] = (0..m).filter(|&a| q_star[s][a] >= best - slack).collect();
    }
    OracleResult { v_star: v, q_star, optimal_policy, iterations, residual }
}

/// Value iteration from `V = 0` until the sup-norm change of a sweep is at
/// most `tol`. `sweeps`, when given, receives the table after every sweep.
pub fn oracle_value_iteration_with(
    mdp: &TabularMdp,
    tol: f64,
    mode: SweepMode,
    mut sweeps: Option<&mut Vec<Vec<f64>>>,
) -> Result<OracleResult> {
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=ORACLE_MAX_SWEEPS {
        residual = 0.0;
        match mode {
            SweepMode::Jacobi => {
                let old = v.clone();
                for s in (0..n).filter(|&s| !mdp.is_terminal(s)) {
                    v[s] = best_q(mdp, &old, s);
                    residual = residual.max((v[s] - old[s]).abs());
                }
            }
            SweepMode::GaussSeidel => {
                for s in (0..n).filter(|&s| !mdp.is_terminal(s)) {
                    let new = best_q(mdp, &v, s);
                    residual = residual.max((new - v[s]).abs());
                    v[s] = new;
                }
            }
        }
        if let Some(out) = sweeps.as_deref_mut() {
            out.push(v.clone());
        }
        if residual <= tol {
            return Ok(finish(mdp, v, it, residual));
        }
    }
    Err(Error::NonConvergent { iterations: ORACLE_MAX_SWEEPS, residual })
}

/// Jacobi value iteration to `tol`.
pub fn oracle_value_iteration(mdp: &TabularMdp, tol: f64) -> Result<OracleResult> {
    oracle_value_iteration_with(mdp, tol, SweepMode::Jacobi, None)
}

fn check_policy(mdp: &TabularMdp, policy: &[Vec<f64>]) -> Result<()> {
    if policy.len() != mdp.n_states() || policy.iter().any(|row| row.len() != mdp.n_actions()) {
        return Err(Error::Validation(format!(
            "policy must have {} rows of {} probabilities",
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}

/// `V^pi` by Jacobi sweeps to `tol`.
pub fn oracle_policy_evaluation(mdp: &TabularMdp, policy: &[Vec<f64>], tol: f64) -> Result<Vec<f64>> {
    check_policy(mdp, policy)?;
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..ORACLE_MAX_SWEEPS {
        let old = v.clone();
        residual = 0.0;
        for s in (0..n).filter(|&s| !mdp.is_terminal(s)) {
            let mut total = 0.0;
            for (a, &p) in policy[s].iter().enumerate() {
                if p > 0.0 {
                    total += p * q_value(mdp, &old, s, a);
                }
            }
            v[s] = total;
            residual = residual.max((v[s] - old[s]).abs());
        }
        if residual <= tol {
            return Ok(v);
        }
    }
    Err(Error::NonConvergent { iterations: ORACLE_MAX_SWEEPS, residual })
}

/// `J(pi) = sum_s p0(s) V^pi(s)`.
pub fn oracle_objective(mdp: &TabularMdp, policy: &[Vec<f64>], tol: f64) -> Result<f64> {
    let v = oracle_policy_evaluation(mdp, policy, tol)?;
    Ok(mdp.initial().iter().map(|&(s, p)| p * v[s]).sum())
}

/// Greedy deterministic policy as probability rows.
pub fn point_mass_policy(n_actions: usize, actions: &[usize]) -> Vec<Vec<f64>> {
    actions
        .iter()
        .map(|&a| {
            let mut row = vec![0.0; n_actions];
            row[a] = 1.0;
            row
        })
        .collect()
}

/// Mean and standard error of Monte Carlo returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    /// `None` when fewer than two episodes were run.
    pub stderr: Option<f64>,
}

fn draw(rng: &mut impl Rng, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Discounted return of one episode; stops at a terminal state or once the
/// discount falls below `1e-12` (or after `100_000` steps when undiscounted).
fn episode_return(mdp: &TabularMdp, policy: &[Vec<f64>], s0: usize, rng: &mut impl Rng) -> f64 {
    let (mut s, mut g, mut discount) = (s0, 0.0, 1.0);
    for _ in 0..100_000 {
        if mdp.is_terminal(s) || discount < 1e-12 {
            break;
        }
        let a = draw(rng, policy[s].iter().copied());
        let outcomes = mdp.transitions(s, a);
        let t = outcomes[draw(rng, outcomes.iter().map(|t| t.prob))];
        g += discount * t.reward;
        discount *= mdp.gamma();
        s = t.next;
    }
    g
}

/// Monte Carlo estimate of `V^pi(s0)`. Episode `i` uses its own random
/// stream, so the result does not depend on how episodes are scheduled.
pub fn oracle_mc_return(
    mdp: &TabularMdp,
    policy: &[Vec<f64>],
    s0: usize,
    episodes: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_policy(mdp, policy)?;
    if episodes == 0 {
        return Err(Error::Validation("episodes must be at least 1".into()));
    }
    let returns = fan_out((0..episodes as u64).collect(), |i| {
        let mut rng = stream_rng(seed, 0x0c_0000_0000 + i);
        episode_return(mdp, policy, s0, &mut rng)
    });
    // Welford: exact for constant returns
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, &g) in returns.iter().enumerate() {
        let delta = g - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (g - mean);
    }
    let k = returns.len() as f64;
    let stderr = (returns.len() > 1).then(|| (m2 / (k - 1.0) / k).sqrt());
    Ok(McEstimate { mean, stderr })
}
