//! Seeded preset runs checked against the oracles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::oracle::{oracle_policy_evaluation, oracle_value_iteration, point_mass_policy, OracleResult};
use crate::control::RootKind;
use crate::engine::{preset, run, AlgorithmConfig, Engine, RunResult};
use crate::error::{Error, Result};
use crate::mdp::{AccessHandle, TabularMdp};
use crate::parallel::fan_out;
use crate::solution::{Coverage, Recommend, SolutionType};

const MANIFEST: &str = include_str!("../../data/verify.toml");

/// Tolerance of the oracle solve behind every check.
pub const ORACLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    VError,
    QError,
    GreedyPolicy,
    InitialValue,
    InitialSolved,
    RootAction,
    PolicyValue,
    BehaviorValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub kind: CheckKind,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default = "full")]
    pub fraction: f64,
}

fn full() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetCriteria {
    pub roots: usize,
    pub checks: Vec<Check>,
}

/// The criteria table shipped with the crate.
pub fn manifest() -> Result<BTreeMap<String, PresetCriteria>> {
    toml::from_str(MANIFEST).map_err(|e| Error::Config(format!("verify manifest: {e}")))
}

pub fn criteria_for(name: &str) -> Result<PresetCriteria> {
    manifest()?.remove(name).ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

/// Outcome of one check across all seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub kind: CheckKind,
    pub tol: Option<f64>,
    pub passed_seeds: usize,
    pub required_seeds: usize,
    pub seeds: usize,
    /// Measured statistic per seed (error, or 1/0 for yes/no checks).
    pub values: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub preset: String,
    pub roots: usize,
    pub checks: Vec<CheckOutcome>,
    pub pass: bool,
}

fn non_terminal(mdp: &TabularMdp) -> impl Iterator<Item = usize> + '_ {
    (0..mdp.n_states()).filter(|&s| !mdp.is_terminal(s))
}

fn state_values(result: &RunResult, mdp: &TabularMdp) -> Vec<f64> {
    let global = &result.global;
    if result.config.solution.coverage == Coverage::Local {
        return (0..mdp.n_states()).map(|s| result.local_values.get(&s).copied().unwrap_or(0.0)).collect();
    }
    (0..mdp.n_states())
        .map(|s| {
            if mdp.is_terminal(s) {
                0.0
            } else if !global.v.is_empty() {
                global.v[s]
            } else if !global.q.is_empty() {
                global.q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max)
            } else {
                0.0
            }
        })
        .collect()
}

fn lowest_argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (a, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = a;
        }
    }
    best
}

/// Policy the run ended with: the softmax table, greedy in `Q`, or a
/// one-step greedy look-ahead on the true model over the value estimates.
pub fn final_policy(result: &RunResult, mdp: &TabularMdp) -> Vec<Vec<f64>> {
    let m = mdp.n_actions();
    let global = &result.global;
    if result.config.solution.kind == SolutionType::Policy && !global.policy.is_empty() {
        return global.policy.clone();
    }
    if result.config.solution.coverage == Coverage::Global && !global.q.is_empty() {
        let greedy: Vec<usize> = global.q.iter().map(|row| lowest_argmax(row)).collect();
        return point_mass_policy(m, &greedy);
    }
    let v = state_values(result, mdp);
    let greedy: Vec<usize> = (0..mdp.n_states())
        .map(|s| {
            let q: Vec<f64> = (0..m)
                .map(|a| mdp.transitions(s, a).iter().map(|t| t.prob * (t.reward + mdp.gamma() * v[t.next])).sum())
                .collect();
            lowest_argmax(&q)
        })
        .collect();
    point_mass_policy(m, &greedy)
}

fn objective(mdp: &TabularMdp, v: &[f64]) -> f64 {
    mdp.initial().iter().map(|&(s, p)| p * v[s]).sum()
}

/// `J(pi)`, or `-inf` when evaluation diverges (an improper policy that
/// never reaches a terminal state in an undiscounted problem).
fn policy_objective(mdp: &TabularMdp, policy: &[Vec<f64>]) -> Result<f64> {
    match oracle_policy_evaluation(mdp, policy, ORACLE_TOL) {
        Ok(v) => Ok(objective(mdp, &v)),
        Err(Error::NonConvergent { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

fn recommend_mode(config: &AlgorithmConfig) -> Recommend {
    match config.root {
        RootKind::ForwardSampling { recommend } => recommend,
        _ => Recommend::MaxValue,
    }
}

/// One seed: returns `(passed, statistic)` per check.
fn evaluate_seed(
    mdp: &TabularMdp,
    name: &str,
    criteria: &PresetCriteria,
    oracle: &OracleResult,
    tol_override: Option<f64>,
    seed: u64,
) -> Result<Vec<(bool, f64)>> {
    let config = preset(name)?;
    let needs_run = criteria.checks.iter().any(|c| c.kind != CheckKind::RootAction);
    let result = if needs_run {
        Some(run(config.clone(), AccessHandle::new(mdp, config.access_required, seed), criteria.roots, seed)?)
    } else {
        None
    };
    let mut out = Vec::new();
    for check in &criteria.checks {
        let tol = tol_override.or(check.tol).unwrap_or(0.0);
        let outcome = match check.kind {
            CheckKind::RootAction => {
                let mut engine = Engine::new(config.clone(), AccessHandle::new(mdp, config.access_required, seed), seed)?;
                engine.search_root()?;
                let root = engine.root();
                let a = engine.local().recommend_at(engine.local().root(), recommend_mode(&config))?;
                let ok = oracle.is_optimal(root, a);
                (ok, if ok { 1.0 } else { 0.0 })
            }
            kind => {
                let result = result.as_ref().expect("run performed");
                check_result(kind, tol, mdp, oracle, result)?
            }
        };
        out.push(outcome);
    }
    Ok(out)
}

fn check_result(kind: CheckKind, tol: f64, mdp: &TabularMdp, oracle: &OracleResult, result: &RunResult) -> Result<(bool, f64)> {
    let err_check = |e: f64| (e <= tol, e);
    Ok(match kind {
        CheckKind::VError => {
            let v = state_values(result, mdp);
            err_check(non_terminal(mdp).map(|s| (v[s] - oracle.v_star[s]).abs()).fold(0.0, f64::max))
        }
        CheckKind::QError => {
            if result.global.q.is_empty() {
                return Err(Error::Config("q_error needs a global Q table".into()));
            }
            let mut e = 0.0f64;
            for s in non_terminal(mdp) {
                for a in 0..mdp.n_actions() {
                    e = e.max((result.global.q[s][a] - oracle.q_star[s][a]).abs());
                }
            }
            err_check(e)
        }
        CheckKind::GreedyPolicy => {
            let pi = final_policy(result, mdp);
            let ok = non_terminal(mdp).all(|s| oracle.is_optimal(s, lowest_argmax(&pi[s])));
            (ok, if ok { 1.0 } else { 0.0 })
        }
        CheckKind::InitialValue => {
            let v = state_values(result, mdp);
            err_check(mdp.initial().iter().map(|&(s, _)| (v[s] - oracle.v_star[s]).abs()).fold(0.0, f64::max))
        }
        CheckKind::InitialSolved => {
            let ok = mdp
                .initial()
                .iter()
                .all(|&(s, _)| mdp.is_terminal(s) || result.global.solved.contains(&s));
            (ok, if ok { 1.0 } else { 0.0 })
        }
        CheckKind::PolicyValue => {
            let j = policy_objective(mdp, &final_policy(result, mdp))?;
            err_check((objective(mdp, &oracle.v_star) - j).abs())
        }
        CheckKind::BehaviorValue => {
            let m = mdp.n_actions();
            let uniform = vec![vec![1.0 / m as f64; m]; mdp.n_states()];
            let vb = oracle_policy_evaluation(mdp, &uniform, ORACLE_TOL)?;
            let v = state_values(result, mdp);
            err_check(non_terminal(mdp).map(|s| (v[s] - vb[s]).abs()).fold(0.0, f64::max))
        }
        CheckKind::RootAction => unreachable!("handled by the caller"),
    })
}

/// Runs `name` on `mdp` for seeds `0..seeds` (offset by `base_seed`) and
/// applies the shipped criteria.
pub fn verify_preset(
    mdp: &TabularMdp,
    name: &str,
    tol_override: Option<f64>,
    seeds: usize,
    base_seed: u64,
) -> Result<VerifyReport> {
    let criteria = criteria_for(name)?;
    let oracle = oracle_value_iteration(mdp, ORACLE_TOL)?;
    let per_seed = fan_out((0..seeds as u64).map(|k| base_seed + k).collect(), |seed| {
        evaluate_seed(mdp, name, &criteria, &oracle, tol_override, seed)
    });
    let per_seed: Vec<Vec<(bool, f64)>> = per_seed.into_iter().collect::<Result<_>>()?;
    let checks: Vec<CheckOutcome> = criteria
        .checks
        .iter()
        .enumerate()
        .map(|(i, check)| {
            let passed = per_seed.iter().filter(|r| r[i].0).count();
            let required = (check.fraction * seeds as f64).ceil() as usize;
            CheckOutcome {
                kind: check.kind,
                tol: tol_override.or(check.tol),
                passed_seeds: passed,
                required_seeds: required,
                seeds,
                values: per_seed.iter().map(|r| r[i].1).collect(),
                pass: passed >= required,
            }
        })
        .collect();
    Ok(VerifyReport {
        preset: name.to_string(),
        roots: criteria.roots,
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}

/// Per-seed summary used by `compare`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    /// Mean of the completed episode returns, if any episode ended.
    pub mean_return: Option<f64>,
    /// `J` of the final policy under the true model; `-inf` if improper.
    pub policy_value: f64,
    pub queries: u64,
}

pub fn summarize(result: &RunResult, mdp: &TabularMdp) -> Result<RunSummary> {
    let returns: Vec<f64> = result.records.iter().filter_map(|r| r.episode_return).collect();
    let policy_value = policy_objective(mdp, &final_policy(result, mdp))?;
    Ok(RunSummary {
        seed: result.seed,
        mean_return: (!returns.is_empty()).then(|| returns.iter().sum::<f64>() / returns.len() as f64),
        policy_value,
        queries: result.query_count,
    })
}

/// Paired runs of two presets over the same seeds.
pub fn compare_presets(
    mdp: &TabularMdp,
    a: &str,
    b: &str,
    roots: Option<usize>,
    seeds: usize,
    base_seed: u64,
) -> Result<Vec<(RunSummary, RunSummary)>> {
    let budget = |name: &str| -> Result<usize> {
        match roots {
            Some(r) => Ok(r),
            None => Ok(criteria_for(name)?.roots),
        }
    };
    let (ra, rb) = (budget(a)?, budget(b)?);
    let (ca, cb) = (preset(a)?, preset(b)?);
    let rows = fan_out((0..seeds as u64).map(|k| base_seed + k).collect(), |seed| -> Result<_> {
        let one = |cfg: &AlgorithmConfig, r: usize| -> Result<RunSummary> {
            let result = run(cfg.clone(), AccessHandle::new(mdp, cfg.access_required, seed), r, seed)?;
            summarize(&result, mdp)
        };
        Ok((one(&ca, ra)?, one(&cb, rb)?))
    });
    rows.into_iter().collect()
}
