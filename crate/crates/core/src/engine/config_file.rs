//! Flat `key = value` algorithm files: `preset = NAME` plus overrides.

use std::collections::BTreeMap;

use super::{dyna_planning, preset, AlgorithmConfig};
use crate::backup::{BootstrapSpec, DynamicsBackup, Extras, HeuristicSpec, Location, PolicyBackup, Table};
use crate::control::{DepthRule, ResidualSource, RootKind, TrialBudget, VisitedSampling};
use crate::error::{Error, Result};
use crate::mdp::AccessMode;
use crate::select::{NextStateRule, SelectKind};
use crate::solution::{Coverage, InitScheme, NodeGrowth, Recommend, SolutionType};
use crate::update::{Baseline, GlobalUpdateRule, LocalUpdateRule, Schedule};

/// Accepted keys, in the order they are applied. Kinds come before the
/// numeric parameters that refine them.
pub const CONFIG_KEYS: [&str; 37] = [
    "solution.coverage",
    "solution.type",
    "solution.init",
    "local.reuse",
    "local.tree_mode",
    "local.growth",
    "root.kind",
    "ps.threshold",
    "budget.trials",
    "budget.tol",
    "depth.kind",
    "depth.n",
    "depth.cap",
    "select.bf",
    "select.af",
    "select.nr",
    "select.eps",
    "select.temp",
    "select.ucb_c",
    "select.novelty_beta",
    "select.next_state",
    "select.force_untried",
    "backup.policy",
    "backup.dynamics",
    "backup.extras",
    "bootstrap.kind",
    "bootstrap.location",
    "label.tol",
    "update.local",
    "update.lambda",
    "update.global",
    "update.baseline",
    "update.eta",
    "update.schedule",
    "dyna.planning_steps",
    "access",
    "roots",
];

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::Config(format!("{key} = {value}: expected {expected}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str, expected: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value, expected))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value, "true or false")),
    }
}

/// `name` or `name:arg`.
fn split_arg(value: &str) -> (&str, Option<&str>) {
    match value.split_once(':') {
        Some((a, b)) => (a.trim(), Some(b.trim())),
        None => (value, None),
    }
}

fn select_kind(key: &str, value: &str, prev: SelectKind) -> Result<SelectKind> {
    let keep = |k: SelectKind| if std::mem::discriminant(&k) == std::mem::discriminant(&prev) { prev } else { k };
    Ok(match value {
        "ordered" => SelectKind::Ordered,
        "greedy" => SelectKind::Greedy,
        "epsilon_greedy" => keep(SelectKind::EpsilonGreedy { eps: 0.1 }),
        "boltzmann" => keep(SelectKind::Boltzmann { temperature: 1.0 }),
        "ucb" => keep(SelectKind::Ucb { c: std::f64::consts::SQRT_2 }),
        "count_novelty" => keep(SelectKind::CountNovelty { beta: super::DEFAULT_NOVELTY_BETA }),
        "stochastic_policy" => SelectKind::StochasticPolicy,
        _ => {
            return Err(bad(
                key,
                value,
                "ordered, greedy, epsilon_greedy, boltzmann, ucb, count_novelty or stochastic_policy",
            ))
        }
    })
}

fn each_select(cfg: &mut AlgorithmConfig, f: impl Fn(&mut SelectKind)) {
    let rules = std::iter::once(&mut cfg.select).chain(cfg.planning.as_mut().map(|p| &mut p.select));
    for rule in rules {
        f(&mut rule.bf);
        f(&mut rule.af);
        if let Some(nr) = rule.nr.as_mut() {
            f(nr);
        }
    }
}

fn apply(cfg: &mut AlgorithmConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "solution.coverage" => {
            cfg.solution.coverage = match value {
                "global" => Coverage::Global,
                "local" => Coverage::Local,
                _ => return Err(bad(key, value, "global or local")),
            }
        }
        "solution.type" => {
            cfg.solution.kind = match value {
                "v" => SolutionType::V,
                "q" => SolutionType::Q,
                "policy" => SolutionType::Policy,
                "actor_critic" => SolutionType::ActorCritic,
                _ => return Err(bad(key, value, "v, q, policy or actor_critic")),
            }
        }
        "solution.init" => {
            cfg.solution.init = match split_arg(value) {
                ("uniform", arg) => InitScheme::Uniform {
                    value: arg.map(|a| num(key, a, "a number")).transpose()?.unwrap_or(0.0),
                },
                ("optimistic", arg) => InitScheme::Optimistic {
                    value: arg.map(|a| num(key, a, "a number")).transpose()?,
                },
                ("heuristic", None) => InitScheme::Heuristic,
                ("random", arg) => InitScheme::Random {
                    seed: 0,
                    scale: arg.map(|a| num(key, a, "a number")).transpose()?.unwrap_or(1.0),
                },
                _ => return Err(bad(key, value, "uniform[:v], optimistic[:v], heuristic or random[:scale]")),
            }
        }
        "local.reuse" => cfg.local.reuse = flag(key, value)?,
        "local.tree_mode" => cfg.local.tree_mode = flag(key, value)?,
        "local.growth" => {
            cfg.local.growth = match value {
                "unbounded" => NodeGrowth::Unbounded,
                "one_per_trial" => NodeGrowth::OnePerTrial,
                "root_only" => NodeGrowth::RootOnly,
                _ => return Err(bad(key, value, "unbounded, one_per_trial or root_only")),
            }
        }
        "root.kind" => {
            let recommend = match cfg.root {
                RootKind::ForwardSampling { recommend } => recommend,
                _ => Recommend::MaxValue,
            };
            cfg.root = match value {
                "ordered" => RootKind::Ordered,
                "forward_sampling" => RootKind::ForwardSampling { recommend },
                "forward_sampling_max_count" => RootKind::ForwardSampling { recommend: Recommend::MaxCount },
                "backward_sampling" => RootKind::BackwardSampling { threshold: super::DEFAULT_PS_THRESHOLD },
                "visited_set" => RootKind::VisitedSet { sampling: VisitedSampling::Uniform },
                "visited_set_recency" => RootKind::VisitedSet { sampling: VisitedSampling::Recency },
                _ => {
                    return Err(bad(
                        key,
                        value,
                        "ordered, forward_sampling, forward_sampling_max_count, backward_sampling, visited_set or visited_set_recency",
                    ))
                }
            }
        }
        "ps.threshold" => {
            let t: f64 = num(key, value, "a number")?;
            let roots = std::iter::once(&mut cfg.root).chain(cfg.planning.as_mut().map(|p| &mut p.root));
            let mut hit = false;
            for root in roots {
                if let RootKind::BackwardSampling { threshold } = root {
                    *threshold = t;
                    hit = true;
                }
            }
            if !hit {
                return Err(Error::Config("ps.threshold needs a backward_sampling root".into()));
            }
        }
        "budget.trials" => {
            cfg.budget = match value {
                "exhaustive" => TrialBudget::Exhaustive { cap: None },
                "until_convergence" => TrialBudget::UntilConvergence { tol: cfg.convergence_tol, source: ResidualSource::Root },
                "until_convergence_max" => {
                    TrialBudget::UntilConvergence { tol: cfg.convergence_tol, source: ResidualSource::TrialMax }
                }
                n => TrialBudget::FixedTrials {
                    n: num(key, n, "a trial count, exhaustive, until_convergence or until_convergence_max")?,
                },
            }
        }
        "budget.tol" => {
            let t: f64 = num(key, value, "a number")?;
            cfg.convergence_tol = t;
            if let TrialBudget::UntilConvergence { tol, .. } = &mut cfg.budget {
                *tol = t;
            }
        }
        "depth.kind" => {
            cfg.depth = match value {
                "fixed" => DepthRule::Fixed { n: 1 },
                "infinite" => DepthRule::Infinite { cap: None },
                "adaptive_frontier" => DepthRule::AdaptiveFrontier,
                "adaptive_duplicate" => DepthRule::AdaptiveDuplicate,
                "ladder" => DepthRule::Ladder { d_max: super::DEFAULT_TD_DEPTH },
                _ => {
                    return Err(bad(
                        key,
                        value,
                        "fixed, infinite, adaptive_frontier, adaptive_duplicate or ladder",
                    ))
                }
            }
        }
        "depth.n" => {
            let v: usize = num(key, value, "a depth")?;
            match &mut cfg.depth {
                DepthRule::Fixed { n } => *n = v,
                DepthRule::Ladder { d_max } => *d_max = v,
                _ => return Err(Error::Config("depth.n applies to fixed or ladder depth".into())),
            }
        }
        "depth.cap" => {
            let v: usize = num(key, value, "a depth")?;
            match &mut cfg.depth {
                DepthRule::Infinite { cap } => *cap = Some(v),
                _ => return Err(Error::Config("depth.cap applies to infinite depth".into())),
            }
        }
        "select.bf" => cfg.select.bf = select_kind(key, value, cfg.select.bf)?,
        "select.af" => cfg.select.af = select_kind(key, value, cfg.select.af)?,
        "select.nr" => {
            cfg.select.nr = match value {
                "none" | "bf" => None,
                v => Some(select_kind(key, v, cfg.select.nr.unwrap_or(cfg.select.bf))?),
            }
        }
        "select.eps" => {
            let x: f64 = num(key, value, "a number")?;
            // planning roots keep their own uniform exploration
            let rule = &mut cfg.select;
            for k in [&mut rule.bf, &mut rule.af].into_iter().chain(rule.nr.as_mut()) {
                if let SelectKind::EpsilonGreedy { eps } = k {
                    *eps = x;
                }
            }
        }
        "select.temp" => {
            let x: f64 = num(key, value, "a number")?;
            each_select(cfg, |k| {
                if let SelectKind::Boltzmann { temperature } = k {
                    *temperature = x;
                }
            });
        }
        "select.ucb_c" => {
            let x: f64 = num(key, value, "a number")?;
            each_select(cfg, |k| {
                if let SelectKind::Ucb { c } = k {
                    *c = x;
                }
            });
        }
        "select.novelty_beta" => {
            let x: f64 = num(key, value, "a number")?;
            each_select(cfg, |k| {
                if let SelectKind::CountNovelty { beta } = k {
                    *beta = x;
                }
            });
        }
        "select.next_state" => {
            cfg.select.next_state = match value {
                "sample" => NextStateRule::Sample,
                "ordered" => NextStateRule::Ordered,
                _ => return Err(bad(key, value, "sample or ordered")),
            }
        }
        "select.force_untried" => cfg.select.force_untried = flag(key, value)?,
        "backup.policy" => {
            cfg.backup.policy = match value {
                "on_policy_sample" => PolicyBackup::OnPolicySample,
                "expected" => PolicyBackup::Expected,
                "greedy_max" => PolicyBackup::GreedyMax,
                _ => return Err(bad(key, value, "on_policy_sample, expected or greedy_max")),
            }
        }
        "backup.dynamics" => {
            cfg.backup.dynamics = match value {
                "sample" => DynamicsBackup::Sample,
                "expected" => DynamicsBackup::Expected,
                _ => return Err(bad(key, value, "sample or expected")),
            }
        }
        "backup.extras" => {
            let mut extras = Extras::default();
            for item in value.split(',').map(str::trim).filter(|s| !s.is_empty() && *s != "none") {
                match item {
                    "counts" => extras.counts = true,
                    "labels" => extras.labels = true,
                    "priorities" => extras.priorities = true,
                    _ => return Err(bad(key, item, "a comma list of counts, labels, priorities")),
                }
            }
            cfg.backup.extras = extras;
        }
        "bootstrap.kind" => {
            cfg.bootstrap.kind = match split_arg(value) {
                ("zero", None) => BootstrapSpec::Zero,
                ("heuristic", None) => BootstrapSpec::Heuristic { heuristic: HeuristicSpec::Default },
                ("heuristic", Some(c)) => BootstrapSpec::Heuristic {
                    heuristic: HeuristicSpec::Constant { value: num(key, c, "a number")? },
                },
                ("learned_v", None) => BootstrapSpec::LearnedGlobal { table: Table::V },
                ("learned_q", None) => BootstrapSpec::LearnedGlobal { table: Table::Q },
                _ => return Err(bad(key, value, "zero, heuristic[:c], learned_v or learned_q")),
            }
        }
        "bootstrap.location" => {
            cfg.bootstrap.location = match value {
                "state" => Location::State,
                "state_action" => Location::StateAction,
                _ => return Err(bad(key, value, "state or state_action")),
            }
        }
        "label.tol" => cfg.label_tol = num(key, value, "a number")?,
        "update.local" => {
            cfg.update_local = match value {
                "replace" => LocalUpdateRule::Replace,
                "average" => LocalUpdateRule::Average,
                "step" => LocalUpdateRule::Step { eta: 0.1 },
                "eligibility" => LocalUpdateRule::Eligibility { lambda: 0.8 },
                _ => return Err(bad(key, value, "replace, average, step or eligibility")),
            }
        }
        "update.lambda" => {
            let x: f64 = num(key, value, "a number")?;
            match &mut cfg.update_local {
                LocalUpdateRule::Eligibility { lambda } => *lambda = x,
                _ => return Err(Error::Config("update.lambda needs update.local = eligibility".into())),
            }
        }
        "update.global" => {
            let eta = cfg.update_global.map_or(0.1, |r| r.eta());
            cfg.update_global = match value {
                "none" => None,
                "tabular_step" => Some(GlobalUpdateRule::TabularStep { eta }),
                "policy_gradient" => Some(GlobalUpdateRule::PolicyGradientSoftmax { eta, baseline: Baseline::None }),
                _ => return Err(bad(key, value, "none, tabular_step or policy_gradient")),
            }
        }
        "update.baseline" => {
            let b = match value {
                "none" => Baseline::None,
                "v_table" => Baseline::VTable,
                _ => return Err(bad(key, value, "none or v_table")),
            };
            match &mut cfg.update_global {
                Some(GlobalUpdateRule::PolicyGradientSoftmax { baseline, .. }) => *baseline = b,
                _ => return Err(Error::Config("update.baseline needs update.global = policy_gradient".into())),
            }
        }
        "update.eta" => {
            let x: f64 = num(key, value, "a number")?;
            let mut hit = false;
            if let LocalUpdateRule::Step { eta } = &mut cfg.update_local {
                *eta = x;
                hit = true;
            }
            if let Some(rule) = cfg.update_global.as_mut() {
                *rule = rule.with_eta(x);
                hit = true;
            }
            if !hit {
                return Err(Error::Config("update.eta needs a step local rule or a global update".into()));
            }
        }
        "update.schedule" => {
            cfg.schedule = match split_arg(value) {
                ("constant", None) => Schedule::Constant,
                ("harmonic", t0) => Schedule::Harmonic {
                    t0: t0.map(|t| num(key, t, "a number")).transpose()?.unwrap_or(100.0),
                },
                _ => return Err(bad(key, value, "constant or harmonic[:t0]")),
            }
        }
        "dyna.planning_steps" => {
            let steps: usize = num(key, value, "a step count")?;
            match (&mut cfg.planning, steps) {
                (_, 0) => cfg.planning = None,
                (Some(p), n) => p.steps = n,
                (None, n) => {
                    let eta = cfg.update_global.map_or(0.1, |r| r.eta());
                    cfg.planning = Some(dyna_planning(n, eta));
                }
            }
        }
        "access" => {
            cfg.access_required = AccessMode::parse(value).ok_or_else(|| {
                bad(key, value, "settable_descriptive, settable_generative or resettable_generative")
            })?
        }
        "roots" => cfg.root_budget = num(key, value, "a root count")?,
        _ => return Err(Error::Config(format!("unknown key {key}"))),
    }
    Ok(())
}

/// Parses an algorithm file. The preset is applied first, then every
/// override in [`CONFIG_KEYS`] order.
pub fn parse_config(text: &str) -> Result<AlgorithmConfig> {
    let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key != "preset" && !CONFIG_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key {key} on line {}", i + 1)));
        }
        if entries.insert(key.to_string(), (i + 1, value.to_string())).is_some() {
            return Err(Error::Parse { line: i + 1, message: format!("duplicate key {key}") });
        }
    }
    let (_, name) = entries
        .get("preset")
        .ok_or_else(|| Error::Config("missing preset = NAME".into()))?;
    let mut cfg = preset(name)?;
    for key in CONFIG_KEYS {
        if let Some((line, value)) = entries.get(key) {
            apply(&mut cfg, key, value).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {line}: {msg}")),
                other => other,
            })?;
        }
    }
    Ok(cfg)
}
