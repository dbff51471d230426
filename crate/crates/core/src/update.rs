//! Learning-rate rules for local aggregation and global table updates,
//! including the tabular-softmax policy gradient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::solution::{GlobalSolution, TraceRecord};

/// How a back-up estimate is folded into the local solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LocalUpdateRule {
    Replace,
    Average,
    Step { eta: f64 },
    Eligibility { lambda: f64 },
}

impl LocalUpdateRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LocalUpdateRule::Step { eta } if !(eta > 0.0 && eta <= 1.0) => {
                Err(Error::Config(format!("update.eta {eta} outside (0, 1]")))
            }
            LocalUpdateRule::Eligibility { lambda } if !(0.0..=1.0).contains(&lambda) => {
                Err(Error::Config(format!("update.lambda {lambda} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    None,
    VTable,
}

/// How the local solution at the root moves the global tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GlobalUpdateRule {
    TabularStep { eta: f64 },
    PolicyGradientSoftmax { eta: f64, baseline: Baseline },
}

impl GlobalUpdateRule {
    pub fn eta(&self) -> f64 {
        match *self {
            GlobalUpdateRule::TabularStep { eta } => eta,
            GlobalUpdateRule::PolicyGradientSoftmax { eta, .. } => eta,
        }
    }

    pub fn with_eta(self, eta: f64) -> Self {
        match self {
            GlobalUpdateRule::TabularStep { .. } => GlobalUpdateRule::TabularStep { eta },
            GlobalUpdateRule::PolicyGradientSoftmax { baseline, .. } => {
                GlobalUpdateRule::PolicyGradientSoftmax { eta, baseline }
            }
        }
    }
}

/// Learning-rate schedule for global updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Schedule {
    Constant,
    Harmonic { t0: f64 },
}

pub fn decay_learning_rate(eta: f64, schedule: Schedule, step: u64) -> f64 {
    match schedule {
        Schedule::Constant => eta,
        Schedule::Harmonic { t0 } => eta * t0 / (t0 + step as f64),
    }
}

/// `old + eta * (target - old)`, returning `target` itself when `eta == 1`.
pub fn step_toward(old: f64, target: f64, eta: f64) -> f64 {
    if eta == 1.0 {
        target
    } else {
        old + eta * (target - old)
    }
}

/// Weight `(1 - lambda) * lambda^(depth - 1)` of a depth-`depth` target.
pub fn eligibility_weight(lambda: f64, depth: usize) -> f64 {
    (1.0 - lambda) * lambda.powi(depth.saturating_sub(1) as i32)
}

/// One application of `rule`; `n` counts this target, `depth` is its depth.
pub fn local_update(rule: LocalUpdateRule, old: f64, target: f64, n: u64, depth: usize) -> f64 {
    match rule {
        LocalUpdateRule::Replace => target,
        LocalUpdateRule::Average => step_toward(old, target, 1.0 / n.max(1) as f64),
        LocalUpdateRule::Step { eta } => step_toward(old, target, eta),
        LocalUpdateRule::Eligibility { lambda } => {
            old + eligibility_weight(lambda, depth.max(1)) * (target - old)
        }
    }
}

/// Moves `V^g(s)` (no action) or `Q^g(s, a)` toward `target`. Returns the
/// absolute change of the entry.
pub fn global_tabular_update(
    rule: GlobalUpdateRule,
    global: &mut GlobalSolution,
    s: usize,
    a: Option<usize>,
    target: f64,
) -> Result<f64> {
    let GlobalUpdateRule::TabularStep { eta } = rule else {
        return Err(Error::Config(
            "a tabular update needs update.global = tabular_step".into(),
        ));
    };
    match a {
        Some(a) => {
            if !global.enabled().q {
                return Err(Error::Config("Q table not maintained".into()));
            }
            let old = global.q(s, a);
            let new = step_toward(old, target, eta);
            global.set_q(s, a, new);
            Ok((new - old).abs())
        }
        None => {
            if !global.enabled().v {
                return Err(Error::Config("V table not maintained".into()));
            }
            let old = global.v(s);
            let new = step_toward(old, target, eta);
            global.set_v(s, new);
            Ok((new - old).abs())
        }
    }
}

/// `logits(s, .) += eta * (g - b) * (onehot(a) - pi(. | s))`.
pub fn policy_gradient_step(
    global: &mut GlobalSolution,
    s: usize,
    a: usize,
    g: f64,
    eta: f64,
    baseline: Baseline,
) {
    let b = match baseline {
        Baseline::None => 0.0,
        Baseline::VTable => global.v(s),
    };
    let probs = global.policy_probs(s);
    let scale = eta * (g - b);
    for (b_act, (logit, p)) in global.logits_mut(s).iter_mut().zip(probs).enumerate() {
        let onehot = if b_act == a { 1.0 } else { 0.0 };
        *logit += scale * (onehot - p);
    }
}

/// REINFORCE update over every step of `trace` using its return estimates.
pub fn policy_gradient_update(
    rule: GlobalUpdateRule,
    global: &mut GlobalSolution,
    trace: &TraceRecord,
) -> Result<()> {
    let GlobalUpdateRule::PolicyGradientSoftmax { eta, baseline } = rule else {
        return Err(Error::Config(
            "a policy-gradient update needs update.global = policy_gradient".into(),
        ));
    };
    if !global.enabled().policy {
        return Err(Error::Config("policy logits not maintained".into()));
    }
    if trace.return_estimates.len() < trace.steps.len() {
        return Err(Error::MissingReturns);
    }
    for (step, &g) in trace.steps.iter().zip(&trace.return_estimates) {
        policy_gradient_step(global, step.s, step.a, g, eta, baseline);
    }
    Ok(())
}

fn softmax_rows(logits: &[f64], n_actions: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(n_actions) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = e.iter().sum();
        out.extend(e.into_iter().map(|x| x / z));
    }
    out
}

/// Exact gradient of `J(theta) = sum_s p0(s) V^pi(s)` with respect to the
/// tabular softmax logits (row-major `s * n_actions + a`):
/// `dJ/dtheta(s, b) = d(s) pi(b|s) (Q(s, b) - V(s))`, with `d` the
/// discounted state-visitation weights from `p0`.
pub fn softmax_policy_gradient(mdp: &TabularMdp, logits: &[f64]) -> Result<Vec<f64>> {
    let (n, m, gamma) = (mdp.n_states(), mdp.n_actions(), mdp.gamma());
    if logits.len() != n * m {
        return Err(Error::Config(format!(
            "expected {} logits, got {}",
            n * m,
            logits.len()
        )));
    }
    let pi = softmax_rows(logits, m);
    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut r = DVector::<f64>::zeros(n);
    for s in (0..n).filter(|&s| !mdp.is_terminal(s)) {
        for a in 0..m {
            let w = pi[s * m + a];
            for t in mdp.transitions(s, a) {
                p[(s, t.next)] += w * t.prob;
                r[s] += w * t.prob * t.reward;
            }
        }
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let singular = || Error::Validation("policy evaluation system is singular".into());
    let v = (&eye - &p * gamma).lu().solve(&r).ok_or_else(singular)?;
    let mut p0 = DVector::<f64>::zeros(n);
    for &(s, prob) in mdp.initial() {
        p0[s] += prob;
    }
    let d = (&eye - p.transpose() * gamma).lu().solve(&p0).ok_or_else(singular)?;
    let mut grad = vec![0.0; n * m];
    for s in (0..n).filter(|&s| !mdp.is_terminal(s)) {
        for b in 0..m {
            let q: f64 = mdp
                .transitions(s, b)
                .iter()
                .map(|t| t.prob * (t.reward + gamma * v[t.next]))
                .sum();
            grad[s * m + b] = d[s] * pi[s * m + b] * (q - v[s]);
        }
    }
    Ok(grad)
}
