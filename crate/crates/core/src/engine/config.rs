use serde::{Deserialize, Serialize};

use crate::backup::{BackupOp, BootstrapConfig, BootstrapSpec, DynamicsBackup, Location, PolicyBackup, Table};
use crate::control::{DepthRule, RootKind, TrialBudget};
use crate::error::{Error, Result};
use crate::mdp::AccessMode;
use crate::select::{NextStateRule, SelectKind, SelectionRule};
use crate::solution::{Coverage, InitScheme, LocalConfig, SolutionConfig, SolutionType};
use crate::update::{GlobalUpdateRule, LocalUpdateRule, Schedule};

/// Every dimension of one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub name: String,
    pub solution: SolutionConfig,
    pub local: LocalConfig,
    pub root: RootKind,
    pub budget: TrialBudget,
    pub depth: DepthRule,
    pub select: SelectionRule,
    pub bootstrap: BootstrapConfig,
    pub backup: BackupOp,
    pub update_local: LocalUpdateRule,
    pub update_global: Option<GlobalUpdateRule>,
    pub schedule: Schedule,
    pub root_budget: usize,
    pub access_required: AccessMode,
    /// Residual below which a state may be labeled solved.
    pub label_tol: f64,
    /// Sweep residual that ends an ordered-root run.
    pub convergence_tol: f64,
    pub planning: Option<PlanningConfig>,
}

/// Simulated roots run against the learned model after every real root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningConfig {
    pub steps: usize,
    pub root: RootKind,
    pub select: SelectionRule,
    pub budget: TrialBudget,
    pub depth: DepthRule,
    pub backup: BackupOp,
    pub bootstrap: BootstrapConfig,
    pub update_local: LocalUpdateRule,
    pub eta: f64,
}

fn conflict(a: &str, b: &str, why: &str) -> Error {
    Error::Config(format!("{a} / {b}: {why}"))
}

fn needs_descriptive(select: &SelectionRule, backup: &BackupOp) -> bool {
    backup.dynamics == DynamicsBackup::Expected || select.next_state == NextStateRule::Ordered
}

fn check_components(
    select: &SelectionRule,
    budget: &TrialBudget,
    depth: &DepthRule,
    backup: &BackupOp,
    bootstrap: &BootstrapConfig,
    update_local: &LocalUpdateRule,
    kind: SolutionType,
) -> Result<()> {
    select.validate()?;
    budget.validate()?;
    depth.validate()?;
    update_local.validate()?;
    if select.next_state == NextStateRule::Ordered && backup.dynamics == DynamicsBackup::Sample {
        return Err(conflict(
            "select.next_state",
            "backup.dynamics",
            "ordered next-state enumeration feeds an expected dynamics back-up",
        ));
    }
    let has_v = matches!(kind, SolutionType::V | SolutionType::ActorCritic);
    let has_policy = matches!(kind, SolutionType::Policy | SolutionType::ActorCritic);
    match bootstrap.kind {
        BootstrapSpec::LearnedGlobal { table: Table::Q } if kind != SolutionType::Q => {
            return Err(conflict("bootstrap.kind", "solution.type", "learned Q bootstrap needs a Q table"));
        }
        BootstrapSpec::LearnedGlobal { table: Table::V } if !has_v => {
            return Err(conflict("bootstrap.kind", "solution.type", "learned V bootstrap needs a V table"));
        }
        BootstrapSpec::LearnedGlobal { table: Table::V } if bootstrap.location == Location::StateAction => {
            return Err(conflict("bootstrap.kind", "bootstrap.location", "a V table has no state-action entries"));
        }
        _ => {}
    }
    for k in [select.bf, select.af].into_iter().chain(select.nr) {
        if k == SelectKind::StochasticPolicy && !has_policy {
            return Err(conflict("select", "solution.type", "stochastic_policy needs policy logits"));
        }
    }
    if backup.policy == PolicyBackup::OnPolicySample && bootstrap.location == Location::StateAction {
        // a' is drawn by the before-frontier rule, which must be stochastic or greedy over Q
        if select.bf == SelectKind::Ordered {
            return Err(conflict("backup.policy", "select.bf", "on-policy bootstrap cannot draw a' in ordered mode"));
        }
    }
    Ok(())
}

/// Checks every cross-dimension rule of `config` against a handle of `mode`.
pub fn validate_config(config: &AlgorithmConfig, mode: AccessMode) -> Result<()> {
    if !mode.satisfies(config.access_required) {
        return Err(conflict(
            "access",
            "handle",
            &format!("a {mode:?} handle cannot serve {:?} queries", config.access_required),
        ));
    }
    if needs_descriptive(&config.select, &config.backup) && config.access_required != AccessMode::SettableDescriptive {
        return Err(conflict("backup.dynamics", "access", "dynamics-expectation requires descriptive access"));
    }
    if config.backup.extras.labels && config.access_required != AccessMode::SettableDescriptive {
        return Err(conflict("backup.extras", "access", "solved labels require descriptive access"));
    }
    if config.access_required == AccessMode::ResettableGenerative {
        if !matches!(config.root, RootKind::ForwardSampling { .. }) {
            return Err(conflict("root.kind", "access", "resettable access only moves forward from the current state"));
        }
        match (config.budget, config.depth) {
            (TrialBudget::UntilConvergence { .. }, _) => {
                return Err(conflict("budget.trials", "access", "repeated trials need settable access"));
            }
            (TrialBudget::Exhaustive { .. }, _) => {
                return Err(conflict("budget.trials", "access", "exhaustive trials enumerate root actions and need settable access"));
            }
            (TrialBudget::FixedTrials { n }, DepthRule::Ladder { d_max }) if n > d_max => {
                return Err(conflict("budget.trials", "depth.n", "ladder trials beyond d_max repeat the episode"));
            }
            (_, DepthRule::Ladder { .. }) => {}
            (budget, _) if budget.max_trials(usize::MAX).is_none_or(|n| n > 1) => {
                return Err(conflict("budget.trials", "access", "more than one trial per root needs settable access"));
            }
            _ => {}
        }
        if config.select.kind(crate::select::Phase::BeforeFrontier) == SelectKind::Ordered
            && !matches!(config.budget, TrialBudget::FixedTrials { n: 1 })
        {
            return Err(conflict("select.bf", "access", "ordered action sweeps need settable access"));
        }
    } else if matches!(config.depth, DepthRule::Ladder { .. }) {
        return Err(conflict("depth.kind", "access", "ladder depths replay a real episode and need resettable roots"));
    }
    match (config.solution.coverage, config.update_global) {
        (Coverage::Local, Some(_)) => {
            return Err(conflict("solution.coverage", "update.global", "a local-only solution has no global update"));
        }
        (Coverage::Global, None) => {
            return Err(conflict("solution.coverage", "update.global", "a global solution needs a global update rule"));
        }
        _ => {}
    }
    let kind = config.solution.kind;
    match config.update_global {
        Some(GlobalUpdateRule::TabularStep { eta }) => {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::Config(format!("update.eta {eta} outside (0, 1]")));
            }
            if kind == SolutionType::Policy {
                return Err(conflict("update.global", "solution.type", "a policy table takes gradient steps"));
            }
        }
        Some(GlobalUpdateRule::PolicyGradientSoftmax { eta, .. }) => {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::Config(format!("update.eta {eta} must be positive")));
            }
            if !matches!(kind, SolutionType::Policy | SolutionType::ActorCritic) {
                return Err(conflict("update.global", "solution.type", "policy gradient needs policy logits"));
            }
        }
        None => {}
    }
    if let Schedule::Harmonic { t0 } = config.schedule {
        if !(t0 > 0.0) {
            return Err(Error::Config(format!("update.schedule t0 {t0} must be positive")));
        }
    }
    if matches!(config.solution.init, InitScheme::Random { scale, .. } if !(scale >= 0.0)) {
        return Err(Error::Config("random init scale must be nonnegative".into()));
    }
    if config.root_budget == 0 {
        return Err(Error::Config("root budget must be at least 1".into()));
    }
    if !(config.label_tol > 0.0) || !(config.convergence_tol > 0.0) {
        return Err(Error::Config("label.tol and budget.tol must be positive".into()));
    }
    if kind == SolutionType::Policy && config.solution.coverage == Coverage::Local {
        return Err(conflict("solution.type", "solution.coverage", "policy logits live in the global solution"));
    }
    config.root.validate()?;
    check_components(
        &config.select,
        &config.budget,
        &config.depth,
        &config.backup,
        &config.bootstrap,
        &config.update_local,
        kind,
    )?;
    if let Some(p) = &config.planning {
        if kind != SolutionType::Q && kind != SolutionType::V {
            return Err(conflict("dyna.planning_steps", "solution.type", "planning updates V or Q tables"));
        }
        if config.solution.coverage != Coverage::Global {
            return Err(conflict("dyna.planning_steps", "solution.coverage", "planning writes the global solution"));
        }
        if matches!(p.root, RootKind::ForwardSampling { .. } | RootKind::Ordered) {
            return Err(conflict("planning.root", "dyna.planning_steps", "planning roots come from the visited set or the priority queue"));
        }
        if !(p.eta > 0.0 && p.eta <= 1.0) {
            return Err(Error::Config(format!("planning eta {} outside (0, 1]", p.eta)));
        }
        if p.budget.max_trials(1).is_none() {
            return Err(conflict("planning.budget", "dyna.planning_steps", "planning trials need a fixed count"));
        }
        p.root.validate()?;
        check_components(&p.select, &p.budget, &p.depth, &p.backup, &p.bootstrap, &p.update_local, kind)?;
    }
    Ok(())
}
