use super::{AlgorithmConfig, PlanningConfig};
use crate::backup::{
    BackupOp, BootstrapConfig, BootstrapSpec, DynamicsBackup, Extras, HeuristicSpec, Location, PolicyBackup, Table,
};
use crate::control::{DepthRule, ResidualSource, RootKind, TrialBudget, VisitedSampling};
use crate::error::{Error, Result};
use crate::mdp::AccessMode;
use crate::select::{NextStateRule, SelectKind, SelectionRule};
use crate::solution::{InitScheme, LocalConfig, NodeGrowth, Recommend, SolutionConfig, SolutionType};
use crate::update::{Baseline, GlobalUpdateRule, LocalUpdateRule, Schedule};

pub const PRESET_NAMES: [&str; 11] = [
    "value_iteration",
    "lao_star",
    "labeled_rtdp",
    "mc_search",
    "mcts",
    "q_learning",
    "sarsa",
    "td_lambda",
    "reinforce",
    "dyna_q",
    "prioritized_sweeping",
];

pub const DEFAULT_ROOT_BUDGET: usize = 1_000_000;
pub const DEFAULT_TOL: f64 = 1e-6;
/// Residual below which LRTDP labels a state solved. Value error can reach
/// the residual times the expected path length, so this sits well under
/// [`DEFAULT_TOL`].
pub const DEFAULT_LABEL_TOL: f64 = 1e-9;
pub const DEFAULT_SEARCH_TRIALS: usize = 1000;
pub const DEFAULT_TD_DEPTH: usize = 10;
pub const DEFAULT_PLANNING_STEPS: usize = 10;
pub const DEFAULT_PS_THRESHOLD: f64 = 1e-5;
pub const DEFAULT_NOVELTY_BETA: f64 = 1.5;

fn backup(policy: PolicyBackup, dynamics: DynamicsBackup) -> BackupOp {
    BackupOp {
        policy,
        dynamics,
        extras: Extras::default(),
    }
}

fn with_extras(mut op: BackupOp, counts: bool, labels: bool, priorities: bool) -> BackupOp {
    op.extras = Extras { counts, labels, priorities };
    op
}

fn boot(kind: BootstrapSpec, location: Location) -> BootstrapConfig {
    BootstrapConfig { kind, location }
}

fn ordered_sweep() -> SelectionRule {
    SelectionRule {
        next_state: NextStateRule::Ordered,
        ..SelectionRule::new(SelectKind::Ordered, SelectKind::Ordered)
    }
}

fn value_iteration() -> AlgorithmConfig {
    AlgorithmConfig {
        name: "value_iteration".into(),
        solution: SolutionConfig::global(SolutionType::V, InitScheme::Uniform { value: 0.0 }),
        local: LocalConfig::default(),
        root: RootKind::Ordered,
        budget: TrialBudget::Exhaustive { cap: None },
        depth: DepthRule::Fixed { n: 1 },
        select: ordered_sweep(),
        bootstrap: boot(BootstrapSpec::LearnedGlobal { table: Table::V }, Location::State),
        backup: backup(PolicyBackup::GreedyMax, DynamicsBackup::Expected),
        update_local: LocalUpdateRule::Replace,
        update_global: Some(GlobalUpdateRule::TabularStep { eta: 1.0 }),
        schedule: Schedule::Constant,
        root_budget: DEFAULT_ROOT_BUDGET,
        access_required: AccessMode::SettableDescriptive,
        label_tol: DEFAULT_TOL,
        convergence_tol: DEFAULT_TOL,
        planning: None,
    }
}

fn heuristic_planner(name: &str) -> AlgorithmConfig {
    AlgorithmConfig {
        name: name.into(),
        solution: SolutionConfig::local(SolutionType::V, InitScheme::Heuristic),
        local: LocalConfig { reuse: true, ..LocalConfig::default() },
        root: RootKind::ForwardSampling { recommend: Recommend::MaxValue },
        bootstrap: boot(BootstrapSpec::Heuristic { heuristic: HeuristicSpec::Default }, Location::State),
        backup: with_extras(backup(PolicyBackup::GreedyMax, DynamicsBackup::Expected), false, true, false),
        update_global: None,
        ..value_iteration()
    }
}

fn lao_star() -> AlgorithmConfig {
    AlgorithmConfig {
        budget: TrialBudget::UntilConvergence { tol: DEFAULT_TOL, source: ResidualSource::Root },
        depth: DepthRule::AdaptiveFrontier,
        select: SelectionRule {
            next_state: NextStateRule::Ordered,
            force_untried: true,
            ..SelectionRule::new(SelectKind::Greedy, SelectKind::Ordered)
        },
        ..heuristic_planner("lao_star")
    }
}

fn labeled_rtdp() -> AlgorithmConfig {
    AlgorithmConfig {
        budget: TrialBudget::Exhaustive { cap: None },
        depth: DepthRule::Fixed { n: 1 },
        select: SelectionRule::new(SelectKind::Ordered, SelectKind::Greedy),
        label_tol: DEFAULT_LABEL_TOL,
        ..heuristic_planner("labeled_rtdp")
    }
}

fn mc_search() -> AlgorithmConfig {
    AlgorithmConfig {
        name: "mc_search".into(),
        solution: SolutionConfig::local(SolutionType::Q, InitScheme::Uniform { value: 0.0 }),
        local: LocalConfig { growth: NodeGrowth::RootOnly, ..LocalConfig::default() },
        root: RootKind::ForwardSampling { recommend: Recommend::MaxValue },
        budget: TrialBudget::FixedTrials { n: DEFAULT_SEARCH_TRIALS },
        depth: DepthRule::Infinite { cap: None },
        select: SelectionRule::new(SelectKind::Ordered, SelectKind::EpsilonGreedy { eps: 1.0 }),
        bootstrap: boot(BootstrapSpec::Zero, Location::State),
        backup: with_extras(backup(PolicyBackup::OnPolicySample, DynamicsBackup::Sample), true, false, false),
        update_local: LocalUpdateRule::Average,
        update_global: None,
        access_required: AccessMode::SettableGenerative,
        ..value_iteration()
    }
}

fn mcts() -> AlgorithmConfig {
    AlgorithmConfig {
        name: "mcts".into(),
        solution: SolutionConfig::local(SolutionType::Q, InitScheme::Optimistic { value: None }),
        local: LocalConfig { reuse: false, tree_mode: true, growth: NodeGrowth::OnePerTrial },
        root: RootKind::ForwardSampling { recommend: Recommend::MaxCount },
        select: SelectionRule::new(SelectKind::Ucb { c: std::f64::consts::SQRT_2 }, SelectKind::EpsilonGreedy { eps: 1.0 }),
        ..mc_search()
    }
}

fn q_learning() -> AlgorithmConfig {
    AlgorithmConfig {
        name: "q_learning".into(),
        solution: SolutionConfig::global(SolutionType::Q, InitScheme::Uniform { value: 0.0 }),
        local: LocalConfig::default(),
        root: RootKind::ForwardSampling { recommend: Recommend::MaxValue },
        budget: TrialBudget::FixedTrials { n: 1 },
        depth: DepthRule::Fixed { n: 1 },
        select: SelectionRule::new(SelectKind::EpsilonGreedy { eps: 0.1 }, SelectKind::EpsilonGreedy { eps: 0.1 }),
        bootstrap: boot(BootstrapSpec::LearnedGlobal { table: Table::Q }, Location::StateAction),
        backup: with_extras(backup(PolicyBackup::GreedyMax, DynamicsBackup::Sample), true, false, false),
        update_local: LocalUpdateRule::Replace,
        update_global: Some(GlobalUpdateRule::TabularStep { eta: 0.1 }),
        schedule: Schedule::Constant,
        root_budget: DEFAULT_ROOT_BUDGET,
        access_required: AccessMode::ResettableGenerative,
        label_tol: DEFAULT_TOL,
        convergence_tol: DEFAULT_TOL,
        planning: None,
    }
}

fn sarsa() -> AlgorithmConfig {
    AlgorithmConfig {
        name: "sarsa".into(),
        backup: with_extras(backup(PolicyBackup::OnPolicySample, DynamicsBackup::Sample), true, false, false),
        ..q_learning()
    }
}

fn td_lambda() -> AlgorithmConfig {
    AlgorithmConfig {
        name: "td_lambda".into(),
        solution: SolutionConfig::global(SolutionType::V, InitScheme::Uniform { value: 0.0 }),
        local: LocalConfig { reuse: true, ..LocalConfig::default() },
        budget: TrialBudget::FixedTrials { n: DEFAULT_TD_DEPTH },
        depth: DepthRule::Ladder { d_max: DEFAULT_TD_DEPTH },
        select: SelectionRule::new(SelectKind::EpsilonGreedy { eps: 1.0 }, SelectKind::EpsilonGreedy { eps: 1.0 }),
        bootstrap: boot(BootstrapSpec::LearnedGlobal { table: Table::V }, Location::State),
        backup: backup(PolicyBackup::OnPolicySample, DynamicsBackup::Sample),
        update_local: LocalUpdateRule::Eligibility { lambda: 0.8 },
        ..q_learning()
    }
}

fn reinforce() -> AlgorithmConfig {
    AlgorithmConfig {
        name: "reinforce".into(),
        solution: SolutionConfig::global(SolutionType::Policy, InitScheme::Uniform { value: 0.0 }),
        local: LocalConfig { reuse: true, ..LocalConfig::default() },
        budget: TrialBudget::FixedTrials { n: 1 },
        depth: DepthRule::Infinite { cap: None },
        select: SelectionRule::new(SelectKind::StochasticPolicy, SelectKind::StochasticPolicy),
        bootstrap: boot(BootstrapSpec::Zero, Location::State),
        backup: backup(PolicyBackup::OnPolicySample, DynamicsBackup::Sample),
        update_local: LocalUpdateRule::Replace,
        update_global: Some(GlobalUpdateRule::PolicyGradientSoftmax { eta: 0.1, baseline: Baseline::None }),
        ..q_learning()
    }
}

fn dyna_q() -> AlgorithmConfig {
    AlgorithmConfig {
        name: "dyna_q".into(),
        planning: Some(dyna_planning(DEFAULT_PLANNING_STEPS, 0.1)),
        ..q_learning()
    }
}

/// Uniform simulated updates of visited states against the learned model.
pub fn dyna_planning(steps: usize, eta: f64) -> PlanningConfig {
    PlanningConfig {
        steps,
        root: RootKind::VisitedSet { sampling: VisitedSampling::Uniform },
        select: SelectionRule::new(SelectKind::EpsilonGreedy { eps: 1.0 }, SelectKind::EpsilonGreedy { eps: 1.0 }),
        budget: TrialBudget::FixedTrials { n: 1 },
        depth: DepthRule::Fixed { n: 1 },
        backup: backup(PolicyBackup::GreedyMax, DynamicsBackup::Sample),
        bootstrap: boot(BootstrapSpec::LearnedGlobal { table: Table::Q }, Location::StateAction),
        update_local: LocalUpdateRule::Replace,
        eta,
    }
}

/// Full expected back-ups of the highest-priority states of the learned model.
pub fn sweep_planning(steps: usize, threshold: f64) -> PlanningConfig {
    PlanningConfig {
        steps,
        root: RootKind::BackwardSampling { threshold },
        select: ordered_sweep(),
        budget: TrialBudget::Exhaustive { cap: None },
        depth: DepthRule::Fixed { n: 1 },
        backup: with_extras(backup(PolicyBackup::GreedyMax, DynamicsBackup::Expected), false, false, true),
        bootstrap: boot(BootstrapSpec::LearnedGlobal { table: Table::Q }, Location::StateAction),
        update_local: LocalUpdateRule::Replace,
        eta: 1.0,
    }
}

fn prioritized_sweeping() -> AlgorithmConfig {
    let novelty = SelectKind::CountNovelty { beta: DEFAULT_NOVELTY_BETA };
    AlgorithmConfig {
        name: "prioritized_sweeping".into(),
        select: SelectionRule::new(novelty, novelty),
        backup: with_extras(backup(PolicyBackup::GreedyMax, DynamicsBackup::Sample), true, false, true),
        planning: Some(sweep_planning(DEFAULT_PLANNING_STEPS, DEFAULT_PS_THRESHOLD)),
        ..q_learning()
    }
}

/// Dimension vector of a named algorithm.
pub fn preset(name: &str) -> Result<AlgorithmConfig> {
    Ok(match name {
        "value_iteration" => value_iteration(),
        "lao_star" => lao_star(),
        "labeled_rtdp" => labeled_rtdp(),
        "mc_search" => mc_search(),
        "mcts" => mcts(),
        "q_learning" => q_learning(),
        "sarsa" => sarsa(),
        "td_lambda" => td_lambda(),
        "reinforce" => reinforce(),
        "dyna_q" => dyna_q(),
        "prioritized_sweeping" => prioritized_sweeping(),
        other => return Err(Error::UnknownPreset(other.to_string())),
    })
}
