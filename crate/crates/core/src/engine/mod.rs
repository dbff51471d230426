//! The generic root/trial loop and the preset registry.
//!
//! An [`Engine`] owns one access handle, the global solution, the current
//! local solution and the root strategy. Each [`Engine::step`] runs the
//! trials of one root, folds the result into the global solution, runs any
//! planning roots against the learned model and moves to the next root.

mod config;
mod config_file;
mod presets;
mod trial;

use std::collections::BTreeMap;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{validate_config, AlgorithmConfig, PlanningConfig};
pub use config_file::{parse_config, CONFIG_KEYS};
pub use presets::{
    dyna_planning, preset, sweep_planning, DEFAULT_NOVELTY_BETA, DEFAULT_PLANNING_STEPS, DEFAULT_PS_THRESHOLD,
    DEFAULT_LABEL_TOL, DEFAULT_ROOT_BUDGET, DEFAULT_SEARCH_TRIALS, DEFAULT_TD_DEPTH, DEFAULT_TOL, PRESET_NAMES,
};
pub use trial::TrialStat;

use crate::backup::{check_solved, optimistic_bound, BootstrapFn, LabelContext};
use crate::control::{trials_remaining, NextRoot, ResidualSource, RootKind, RootStrategy, TrialBudget};
use crate::error::{Error, Result};
use crate::mdp::{stream_rng, AccessHandle, AccessMode, QueryResult};
use crate::model::LearnedTabularModel;
use crate::select::{ActionView, Phase};
use crate::solution::{
    init_global, init_local, Coverage, GlobalSolution, InitScheme, LocalConfig, LocalSolution, Prior, Snapshot,
    SolutionType,
};
use crate::update::{decay_learning_rate, global_tabular_update, policy_gradient_step, GlobalUpdateRule, LocalUpdateRule};
use trial::{node_init, Episode, NodeInit, Trial, TrialSpec};

/// Safety cap on trials from one root under a convergence budget.
pub const MAX_TRIALS_PER_ROOT: usize = 100_000;

/// Consumed episode steps kept before the prefix is dropped.
const EPISODE_COMPACT: usize = 4096;

/// Summary of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootRecord {
    pub iter: u64,
    pub root: usize,
    pub trials: usize,
    pub v_root: f64,
    pub residual: f64,
    /// Discounted return of the real episode that ended at this iteration.
    pub episode_return: Option<f64>,
    /// Cumulative queries to the real environment.
    pub queries: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub records: Vec<RootRecord>,
    pub global: Snapshot,
    /// `V^l` of every local node at the end of the run, by state.
    pub local_values: BTreeMap<usize, f64>,
    pub query_count: u64,
    pub wall_ms: u64,
    pub seed: u64,
    pub converged: bool,
    pub config: AlgorithmConfig,
}

/// Runs `config` on `handle` for at most `root_budget` roots.
pub fn run(mut config: AlgorithmConfig, handle: AccessHandle<'_>, root_budget: usize, seed: u64) -> Result<RunResult> {
    config.root_budget = root_budget;
    let mut engine = Engine::new(config, handle, seed)?;
    while engine.step()?.is_some() {}
    Ok(engine.into_result())
}

fn node_init_scheme(init: InitScheme, coverage: Coverage, bootstrap: &BootstrapFn, bound: f64) -> NodeInit {
    if coverage == Coverage::Global {
        return NodeInit::FromGlobal;
    }
    match init {
        InitScheme::Uniform { value } => NodeInit::Constant(value),
        InitScheme::Optimistic { value } => NodeInit::Constant(value.unwrap_or(bound)),
        InitScheme::Heuristic => match bootstrap.heuristic_values() {
            Some(h) => NodeInit::PerState(h.to_vec()),
            None => NodeInit::Constant(bound),
        },
        InitScheme::Random { seed, scale } => NodeInit::Random { seed, scale },
    }
}

struct Planner {
    spec: TrialSpec,
    steps: usize,
    eta: f64,
    roots: RootStrategy,
    model: LearnedTabularModel,
    observed: usize,
}

pub struct Engine<'m> {
    config: AlgorithmConfig,
    spec: TrialSpec,
    handle: AccessHandle<'m>,
    global: GlobalSolution,
    local: LocalSolution,
    roots: RootStrategy,
    planner: Option<Planner>,
    rng: ChaCha8Rng,
    seed: u64,
    root: usize,
    episodic: bool,
    episode: Episode,
    pending: Option<(usize, usize)>,
    episode_return: f64,
    discount: f64,
    episode_roots: Vec<usize>,
    sweep_residual: f64,
    iteration: u64,
    searched: Option<(usize, f64)>,
    root_before: f64,
    root_action: Option<usize>,
    records: Vec<RootRecord>,
    last_trials: Vec<TrialStat>,
    done: bool,
    converged: bool,
    wall_clock: bool,
    started: Instant,
}

impl<'m> Engine<'m> {
    /// Validates `config` against the handle and places the first root.
    pub fn new(config: AlgorithmConfig, mut handle: AccessHandle<'m>, seed: u64) -> Result<Self> {
        validate_config(&config, handle.mode())?;
        let source = handle.source();
        let (n, m) = (source.n_states(), source.n_actions());
        let horizon = config.depth.horizon(n, 0).max(10 * n);
        let bootstrap = BootstrapFn::resolve(&config.bootstrap, source, horizon)?;
        let bound = optimistic_bound(source, horizon);
        let prior = Prior {
            optimistic: bound,
            heuristic: bootstrap.heuristic_values().map(<[f64]>::to_vec),
        };
        let global = init_global(&config.solution, n, m, &prior)?;
        let spec = TrialSpec {
            select: config.select,
            depth: config.depth,
            budget: config.budget,
            backup: config.backup,
            bootstrap: bootstrap.clone(),
            update_local: config.update_local,
            coverage: config.solution.coverage,
            growth: config.local.growth,
            init: node_init_scheme(config.solution.init, config.solution.coverage, &bootstrap, bound),
        };
        let planner = match &config.planning {
            Some(p) => Some(Planner {
                spec: TrialSpec {
                    select: p.select,
                    depth: p.depth,
                    budget: p.budget,
                    backup: p.backup,
                    bootstrap: BootstrapFn::resolve(&p.bootstrap, source, horizon)?,
                    update_local: p.update_local,
                    coverage: Coverage::Global,
                    growth: crate::solution::NodeGrowth::RootOnly,
                    init: NodeInit::FromGlobal,
                },
                steps: p.steps,
                eta: p.eta,
                roots: RootStrategy::new(p.root),
                model: LearnedTabularModel::new(n, m, source.gamma()),
                observed: 0,
            }),
            None => None,
        };
        let mut rng = stream_rng(seed, 1);
        let mut roots = RootStrategy::new(config.root);
        let root = roots.first_root(&mut handle, &mut rng);
        let (v0, q0) = node_init(&spec, &global, source, root)?;
        let local = init_local(root, None, config.local, m, v0, q0);
        let mut engine = Self {
            episodic: config.access_required == AccessMode::ResettableGenerative,
            config,
            spec,
            handle,
            global,
            local,
            roots,
            planner,
            rng,
            seed,
            root,
            episode: Episode { current: root, ..Episode::default() },
            pending: None,
            episode_return: 0.0,
            discount: 1.0,
            episode_roots: Vec::new(),
            sweep_residual: 0.0,
            iteration: 0,
            searched: None,
            root_before: 0.0,
            root_action: None,
            records: Vec::new(),
            last_trials: Vec::new(),
            done: false,
            converged: false,
            wall_clock: false,
            started: Instant::now(),
        };
        if let Some(p) = engine.planner.as_mut() {
            p.model.observe_start(root);
        }
        engine.roots.mark_visited(root);
        Ok(engine)
    }

    /// Measure real elapsed time in records; off by default so output is reproducible.
    pub fn with_wall_clock(mut self, on: bool) -> Self {
        self.wall_clock = on;
        self
    }

    pub fn config(&self) -> &AlgorithmConfig {
        &self.config
    }

    pub fn global(&self) -> &GlobalSolution {
        &self.global
    }

    pub fn local(&self) -> &LocalSolution {
        &self.local
    }

    pub fn handle(&self) -> &AccessHandle<'m> {
        &self.handle
    }

    pub fn model(&self) -> Option<&LearnedTabularModel> {
        self.planner.as_ref().map(|p| &p.model)
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn records(&self) -> &[RootRecord] {
        &self.records
    }

    /// Trials of the most recent root.
    pub fn last_trials(&self) -> &[TrialStat] {
        &self.last_trials
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    fn elapsed_ms(&self) -> u64 {
        if self.wall_clock {
            self.started.elapsed().as_millis() as u64
        } else {
            0
        }
    }

    fn root_skipped(&self) -> bool {
        let s = self.root;
        self.handle.is_terminal(s) || (self.config.backup.extras.labels && self.global.is_solved(s))
    }

    /// Runs the trials of the current root without touching the global
    /// solution or moving on. Returns the root value.
    pub fn search_root(&mut self) -> Result<f64> {
        if let Some((_, v)) = self.searched {
            return Ok(v);
        }
        self.last_trials.clear();
        self.root_action = None;
        self.root_before = self.root_value();
        let root = self.root;
        if self.root_skipped() {
            self.searched = Some((0, 0.0));
            return Ok(0.0);
        }
        let root_id = self.local.root();
        let m = self.handle.n_actions();
        let mut trials = 0;
        let mut residual = f64::INFINITY;
        let mut trial = Trial::new(
            &self.spec,
            &mut self.global,
            &mut self.local,
            &mut self.handle,
            &mut self.rng,
            if self.episodic { Some(&mut self.episode) } else { None },
            &mut self.pending,
            self.iteration,
        );
        while trials_remaining(self.spec.budget, trials, residual, m) && trials < MAX_TRIALS_PER_ROOT {
            let before = trial.local.node(root_id).v;
            let stat = trial.run(root, trials)?;
            residual = match self.spec.budget {
                TrialBudget::UntilConvergence { .. } if stat.expanded => f64::INFINITY,
                TrialBudget::UntilConvergence { source: ResidualSource::TrialMax, .. } => stat.max_change,
                _ => (trial.local.node(root_id).v - before).abs(),
            };
            trials += 1;
            self.last_trials.push(stat);
        }
        let root_action = trial.root_action;
        if matches!(self.spec.update_local, LocalUpdateRule::Eligibility { .. }) {
            self.local.finish_eligibility(root_id);
        }
        let v = self.local.node(root_id).v;
        self.searched = Some((trials, v));
        self.root_action = root_action;
        Ok(v)
    }

    /// Value of the current root as reported in records.
    fn root_value(&self) -> f64 {
        let kind = self.config.solution.kind;
        if self.config.solution.coverage == Coverage::Global && matches!(kind, SolutionType::V | SolutionType::Q) {
            self.global.state_value(self.root)
        } else {
            self.local.node(self.local.root()).v
        }
    }

    /// Folds the local root estimates into the global solution. Returns the
    /// residual and the temporal-difference error of the root.
    fn update_global(&mut self) -> Result<(f64, f64)> {
        let s = self.root;
        let root_id = self.local.root();
        let Some(rule) = self.config.update_global else {
            let d = (self.local.node(root_id).v - self.root_before).abs();
            return Ok((d, d));
        };
        let counts = self.config.backup.extras.counts;
        if counts {
            if let Some(a) = self.root_action {
                self.global.add_visit(s, a, 1);
            }
        }
        let eta = decay_learning_rate(rule.eta(), self.config.schedule, self.global.count_s(s).saturating_sub(1));
        let rule = rule.with_eta(eta);
        let node = self.local.node(root_id).clone();
        let (mut residual, mut error) = (0.0f64, 0.0f64);
        match rule {
            GlobalUpdateRule::PolicyGradientSoftmax { eta, baseline } => {
                if let Some(a) = self.root_action.filter(|&a| node.tried(a)) {
                    let before = self.global.logits(s).to_vec();
                    policy_gradient_step(&mut self.global, s, a, node.q[a], eta, baseline);
                    for (x, y) in before.iter().zip(self.global.logits(s)) {
                        residual = residual.max((x - y).abs());
                    }
                    error = residual / eta;
                }
            }
            GlobalUpdateRule::TabularStep { .. } => {
                if self.global.enabled().q {
                    for a in (0..node.q.len()).filter(|&a| node.tried(a)) {
                        error = error.max((node.q[a] - self.global.q(s, a)).abs());
                        residual = residual.max(global_tabular_update(rule, &mut self.global, s, Some(a), node.q[a])?);
                    }
                }
                if self.global.enabled().v {
                    error = error.max((node.v - self.global.v(s)).abs());
                    residual = residual.max(global_tabular_update(rule, &mut self.global, s, None, node.v)?);
                }
            }
        }
        Ok((residual, error))
    }

    /// Feeds new real transitions to the learned model.
    fn learn_model(&mut self, error: f64) {
        let skipped = self.root_skipped();
        let Some(p) = self.planner.as_mut() else { return };
        for step in &self.episode.steps[p.observed.min(self.episode.steps.len())..] {
            let terminal = self.handle.is_terminal(step.next);
            p.model.observe(step.s, step.a, step.next, step.r, terminal);
            p.roots.mark_visited(step.s);
        }
        p.observed = self.episode.steps.len();
        if matches!(p.roots.kind(), RootKind::BackwardSampling { .. }) && !skipped {
            p.roots.push_state(self.root, error);
        }
    }

    /// Simulated roots against the learned model.
    fn plan(&mut self) -> Result<()> {
        let Some(p) = self.planner.as_mut() else { return Ok(()) };
        let Planner { spec, steps, eta, roots, model, .. } = p;
        let n = self.handle.n_states();
        let m = self.handle.n_actions();
        let seed = self.seed ^ (self.iteration + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut handle = model.as_handle(seed);
        let rule = GlobalUpdateRule::TabularStep { eta: *eta };
        let local_cfg = LocalConfig { growth: crate::solution::NodeGrowth::RootOnly, ..LocalConfig::default() };
        for _ in 0..*steps {
            let s = match roots.next_root(n, &mut self.rng) {
                NextRoot::State(s) => s,
                NextRoot::Done => break,
            };
            if crate::mdp::TransitionSource::is_terminal(&*model, s) {
                continue;
            }
            let (v0, q0) = node_init(spec, &self.global, &*model, s)?;
            let mut local = init_local(s, None, local_cfg, m, v0, q0);
            let mut pending = None;
            let mut trial = Trial::new(
                spec,
                &mut self.global,
                &mut local,
                &mut handle,
                &mut self.rng,
                None,
                &mut pending,
                self.iteration,
            );
            let mut done = 0;
            while trials_remaining(spec.budget, done, f64::INFINITY, m) {
                trial.run(s, done)?;
                done += 1;
            }
            let node = local.node(local.root());
            let before = self.global.state_value(s);
            if self.global.enabled().q {
                for a in (0..m).filter(|&a| node.tried(a)) {
                    global_tabular_update(rule, &mut self.global, s, Some(a), node.q[a])?;
                }
            } else {
                global_tabular_update(rule, &mut self.global, s, None, node.v)?;
            }
            if spec.backup.extras.priorities {
                let delta = (self.global.state_value(s) - before).abs();
                roots.push_priority(delta, &model.predecessors(s));
            }
        }
        Ok(())
    }

    fn end_episode(&mut self) -> f64 {
        let ret = self.episode_return;
        self.episode_return = 0.0;
        self.discount = 1.0;
        self.episode = Episode::default();
        self.episode_roots.clear();
        self.pending = None;
        self.root = self.handle.reset();
        self.episode.current = self.root;
        if let Some(p) = self.planner.as_mut() {
            p.model.observe_start(self.root);
            p.observed = 0;
        }
        ret
    }

    fn accumulate(&mut self, reward: f64) {
        self.episode_return += self.discount * reward;
        self.discount *= self.handle.gamma();
    }

    /// Episodic roots follow the real episode one step at a time.
    fn advance_episode(&mut self) -> Option<f64> {
        let Some(step) = self.episode.steps.get(self.episode.cursor).copied() else {
            return Some(self.end_episode());
        };
        self.episode.cursor += 1;
        self.accumulate(step.r);
        if self.handle.is_terminal(step.next) {
            return Some(self.end_episode());
        }
        self.root = step.next;
        if self.episode.cursor > EPISODE_COMPACT {
            let c = self.episode.cursor;
            self.episode.steps.drain(..c);
            self.episode.cursor = 0;
            if let Some(p) = self.planner.as_mut() {
                p.observed = p.observed.saturating_sub(c);
            }
        }
        None
    }

    /// Settable forward roots execute the recommended action from the root.
    fn advance_settable(&mut self, recommend: crate::solution::Recommend) -> Result<Option<f64>> {
        let s = self.root;
        let labels = self.config.backup.extras.labels;
        let cap = 10 * self.handle.n_states().max(10);
        if self.handle.is_terminal(s) || (labels && self.global.is_solved(s)) || self.episode_roots.len() >= cap {
            return Ok(Some(self.finish_settable_episode()?));
        }
        let root_id = self.local.root();
        let chosen = match self.config.select.nr {
            Some(_) => {
                let node = self.local.node(root_id);
                let novelty = self.global.counts_sa_row(s).to_vec();
                let policy = self.global.enabled().policy.then(|| self.global.policy_probs(s));
                let view = ActionView {
                    q: &node.q,
                    n_sa: &node.n_sa,
                    n_s: node.n_s,
                    novelty_counts: &novelty,
                    force_untried: false,
                    ordered_index: self.iteration,
                    policy: policy.as_deref(),
                    step: self.iteration,
                };
                Ok(self.config.select.select(Phase::NextRoot, &view, &mut self.rng))
            }
            None => self.local.recommend_at(root_id, recommend),
        };
        let a = match chosen {
            Ok(a) => a,
            Err(Error::NoVisitedChildren(_)) => return Ok(Some(self.finish_settable_episode()?)),
            Err(e) => return Err(e),
        };
        let QueryResult::Sample { next, reward } = self.handle.query_generative(s, a)? else {
            unreachable!("generative query returned a distribution")
        };
        self.accumulate(reward);
        self.episode_roots.push(s);
        if self.handle.is_terminal(next) || (labels && self.global.is_solved(next)) {
            return Ok(Some(self.finish_settable_episode()?));
        }
        self.root = next;
        Ok(None)
    }

    fn finish_settable_episode(&mut self) -> Result<f64> {
        if self.config.backup.extras.labels {
            let roots = std::mem::take(&mut self.episode_roots);
            let mut ctx = LabelContext {
                local: &mut self.local,
                global: &mut self.global,
                bootstrap: &self.spec.bootstrap,
                handle: &mut self.handle,
            };
            for &s in roots.iter().rev() {
                if !check_solved(s, self.config.label_tol, &mut ctx)? {
                    break;
                }
            }
            let initial = self.handle.source().initial();
            if initial.iter().all(|&(s, _)| self.global.is_solved(s) || self.handle.is_terminal(s)) {
                self.done = true;
                self.converged = true;
            }
        }
        Ok(self.end_episode())
    }

    fn advance(&mut self, residual: f64) -> Result<Option<f64>> {
        match self.roots.kind() {
            RootKind::ForwardSampling { recommend } => {
                if self.episodic {
                    Ok(self.advance_episode())
                } else {
                    self.advance_settable(recommend)
                }
            }
            RootKind::Ordered => {
                self.sweep_residual = self.sweep_residual.max(residual);
                let n = self.handle.n_states();
                if let NextRoot::State(s) = self.roots.next_root(n, &mut self.rng) {
                    self.root = s;
                }
                if self.roots.cursor() == 0 {
                    if self.sweep_residual < self.config.convergence_tol {
                        self.done = true;
                        self.converged = true;
                    }
                    self.sweep_residual = 0.0;
                }
                Ok(None)
            }
            _ => {
                let n = self.handle.n_states();
                self.roots.mark_visited(self.root);
                match self.roots.next_root(n, &mut self.rng) {
                    NextRoot::State(s) => self.root = s,
                    NextRoot::Done => {
                        self.done = true;
                        self.converged = true;
                    }
                }
                Ok(None)
            }
        }
    }

    /// Completed sweeps of an ordered-root run.
    pub fn sweeps(&self) -> u64 {
        let n = self.handle.n_states().max(1) as u64;
        self.iteration / n
    }

    /// One outer iteration. Returns `None` once the run has finished.
    pub fn step(&mut self) -> Result<Option<RootRecord>> {
        if self.done {
            return Ok(None);
        }
        self.search_root()?;
        let (trials, _) = self.searched.take().expect("searched");
        let root = self.root;
        let (residual, error) = if self.root_skipped() { (0.0, 0.0) } else { self.update_global()? };
        let v_root = self.root_value();
        self.learn_model(error);
        self.plan()?;
        let episode_return = self.advance(residual)?;
        self.iteration += 1;
        if self.iteration >= self.config.root_budget as u64 {
            self.done = true;
        }
        if !self.done {
            let m = self.handle.n_actions();
            let placeholder = init_local(self.root, None, LocalConfig::default(), m, 0.0, vec![0.0; m]);
            let prev = std::mem::replace(&mut self.local, placeholder);
            let carry = self.config.local.reuse.then_some(prev);
            let (v0, q0) = node_init(&self.spec, &self.global, self.handle.source(), self.root)?;
            self.local = init_local(self.root, carry, self.config.local, m, v0, q0);
        }
        let record = RootRecord {
            iter: self.iteration - 1,
            root,
            trials,
            v_root,
            residual,
            episode_return,
            queries: self.handle.query_count(),
            wall_ms: self.elapsed_ms(),
        };
        self.records.push(record);
        Ok(Some(record))
    }

    pub fn into_result(self) -> RunResult {
        let mut local_values = BTreeMap::new();
        for (_, node) in self.local.nodes() {
            local_values.entry(node.state).or_insert(node.v);
        }
        RunResult {
            global: self.global.snapshot(),
            local_values,
            query_count: self.handle.query_count(),
            wall_ms: self.elapsed_ms(),
            seed: self.seed,
            converged: self.converged,
            config: self.config,
            records: self.records,
        }
    }
}
