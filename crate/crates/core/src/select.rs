//! Action selection inside trials and next-state selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{AccessMode, QueryResult, Transition};

/// Where in the trial an action is being chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// At a state stored in the local solution.
    BeforeFrontier,
    /// Beyond the local solution (roll-out).
    AfterFrontier,
    /// Choosing the real action that sets the next root.
    NextRoot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SelectKind {
    Ordered,
    Greedy,
    EpsilonGreedy { eps: f64 },
    Boltzmann { temperature: f64 },
    Ucb { c: f64 },
    CountNovelty { beta: f64 },
    StochasticPolicy,
}

impl SelectKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SelectKind::EpsilonGreedy { eps } if !(0.0..=1.0).contains(&eps) => {
                Err(Error::Config(format!("select.eps {eps} outside [0, 1]")))
            }
            SelectKind::Boltzmann { temperature } if !(temperature > 0.0) => Err(Error::Config(
                format!("select.temp {temperature} must be positive"),
            )),
            SelectKind::Ucb { c } if !(c >= 0.0) => {
                Err(Error::Config(format!("select.ucb_c {c} must be nonnegative")))
            }
            SelectKind::CountNovelty { beta } if !(beta >= 0.0) => Err(Error::Config(format!(
                "select.novelty_beta {beta} must be nonnegative"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NextStateRule {
    Sample,
    Ordered,
}

/// Linear decay of epsilon from its configured value to `eps_final`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsSchedule {
    pub eps_final: f64,
    pub decay_steps: u64,
}

impl EpsSchedule {
    pub fn at(&self, eps: f64, step: u64) -> f64 {
        if self.decay_steps == 0 {
            return self.eps_final;
        }
        let frac = (step as f64 / self.decay_steps as f64).min(1.0);
        eps + (self.eps_final - eps) * frac
    }
}

/// Phase-bound selection kinds plus next-state selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRule {
    pub bf: SelectKind,
    pub af: SelectKind,
    /// Falls back to `bf` when absent.
    pub nr: Option<SelectKind>,
    pub next_state: NextStateRule,
    pub eps_decay: Option<EpsSchedule>,
    /// Greedy and UCB rules try every untried action at a stored state first.
    #[serde(default)]
    pub force_untried: bool,
}

impl SelectionRule {
    /// `bf` inside the local solution, `af` beyond it, sampled next states.
    pub fn new(bf: SelectKind, af: SelectKind) -> Self {
        Self {
            bf,
            af,
            nr: None,
            next_state: NextStateRule::Sample,
            eps_decay: None,
            force_untried: false,
        }
    }

    pub fn kind(&self, phase: Phase) -> SelectKind {
        match phase {
            Phase::BeforeFrontier => self.bf,
            Phase::AfterFrontier => self.af,
            Phase::NextRoot => self.nr.unwrap_or(self.bf),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bf.validate()?;
        self.af.validate()?;
        if let Some(nr) = self.nr {
            nr.validate()?;
        }
        Ok(())
    }

    pub fn select(&self, phase: Phase, view: &ActionView<'_>, rng: &mut impl Rng) -> usize {
        select_action(self.kind(phase), view, self.eps_decay, rng)
    }
}

/// Everything a selection rule may look at for one state.
#[derive(Debug, Clone, Copy)]
pub struct ActionView<'a> {
    /// Value per action; untried actions already carry their fallback value.
    pub q: &'a [f64],
    /// Local visit counts per action.
    pub n_sa: &'a [u64],
    /// Local visit count of the state.
    pub n_s: u64,
    /// Counts that drive the novelty bonus.
    pub novelty_counts: &'a [u64],
    /// Try untried actions first under greedy and UCB rules.
    pub force_untried: bool,
    /// Position of the ordered cursor.
    pub ordered_index: u64,
    /// Action probabilities for `StochasticPolicy`.
    pub policy: Option<&'a [f64]>,
    /// Step counter driving epsilon decay.
    pub step: u64,
}

/// `q + c * sqrt(ln(n_parent) / n_child)`, `+inf` for an unvisited child.
pub fn ucb_score(q: f64, n_parent: f64, n_child: f64, c: f64) -> f64 {
    if n_child <= 0.0 {
        return f64::INFINITY;
    }
    q + c * (n_parent.max(1.0).ln() / n_child).sqrt()
}

/// Softmax of `q / temperature`, shifted by `max(q)` before exponentiation.
pub fn boltzmann_probs(q: &[f64], temperature: f64) -> Vec<f64> {
    let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = q.iter().map(|x| ((x - m) / temperature).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// `beta / sqrt(1 + n)`.
pub fn novelty_bonus(n: u64, beta: f64) -> f64 {
    beta / (1.0 + n as f64).sqrt()
}

/// Lowest-index argmax.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v || i == 0 {
            best = i;
            best_v = v;
        }
    }
    best
}

fn sample<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    crate::mdp::sample_index(rng, probs.iter().copied())
}

fn greedy(view: &ActionView<'_>) -> usize {
    if view.force_untried {
        if let Some(a) = view.n_sa.iter().position(|&n| n == 0) {
            return a;
        }
    }
    argmax(view.q.iter().copied())
}

/// Greedy choice with ties drawn uniformly, matching [`greedy_probs`].
fn greedy_tie_break(view: &ActionView<'_>, rng: &mut (impl Rng + ?Sized)) -> usize {
    let a = greedy(view);
    if view.force_untried && view.n_sa[a] == 0 {
        return a;
    }
    let best = view.q[a];
    let ties = view.q.iter().filter(|&&x| x == best).count();
    if ties < 2 {
        return a;
    }
    let k = rng.random_range(0..ties);
    view.q.iter().enumerate().filter(|&(_, &x)| x == best).nth(k).map_or(a, |(i, _)| i)
}

/// Picks an action at one state according to `kind`.
pub fn select_action(
    kind: SelectKind,
    view: &ActionView<'_>,
    eps_decay: Option<EpsSchedule>,
    rng: &mut (impl Rng + ?Sized),
) -> usize {
    let n = view.q.len();
    match kind {
        SelectKind::Ordered => (view.ordered_index % n as u64) as usize,
        SelectKind::Greedy => greedy(view),
        SelectKind::EpsilonGreedy { eps } => {
            let eps = eps_decay.map_or(eps, |d| d.at(eps, view.step));
            if eps > 0.0 && rng.random::<f64>() < eps {
                rng.random_range(0..n)
            } else {
                greedy_tie_break(view, rng)
            }
        }
        SelectKind::Boltzmann { temperature } => sample(rng, &boltzmann_probs(view.q, temperature)),
        SelectKind::Ucb { c } => argmax(
            (0..n).map(|a| ucb_score(view.q[a], view.n_s as f64, view.n_sa[a] as f64, c)),
        ),
        SelectKind::CountNovelty { beta } => {
            argmax((0..n).map(|a| view.q[a] + novelty_bonus(view.novelty_counts[a], beta)))
        }
        SelectKind::StochasticPolicy => match view.policy {
            Some(p) => sample(rng, p),
            None => rng.random_range(0..n),
        },
    }
}

/// Point mass on the argmax, split uniformly over ties.
pub fn greedy_probs(q: &[f64]) -> Vec<f64> {
    let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties = q.iter().filter(|&&x| x == m).count() as f64;
    q.iter().map(|&x| if x == m { 1.0 / ties } else { 0.0 }).collect()
}

/// Action distribution implied by `kind`, used by expected policy back-ups.
/// Deterministic rules map to the greedy distribution.
pub fn action_distribution(kind: SelectKind, view: &ActionView<'_>, eps_decay: Option<EpsSchedule>) -> Vec<f64> {
    let n = view.q.len() as f64;
    match kind {
        SelectKind::EpsilonGreedy { eps } => {
            let eps = eps_decay.map_or(eps, |d| d.at(eps, view.step));
            greedy_probs(view.q)
                .into_iter()
                .map(|p| eps / n + (1.0 - eps) * p)
                .collect()
        }
        SelectKind::Boltzmann { temperature } => boltzmann_probs(view.q, temperature),
        SelectKind::StochasticPolicy => match view.policy {
            Some(p) => p.to_vec(),
            None => vec![1.0 / n; view.q.len()],
        },
        _ => greedy_probs(view.q),
    }
}

/// Outcome of next-state selection.
#[derive(Debug, Clone, PartialEq)]
pub enum NextStateChoice {
    One { next: usize, reward: f64 },
    /// Every child in stored order; the caller recurses into each.
    AllChildren(Vec<Transition>),
}

pub fn select_next_state(
    rule: NextStateRule,
    result: &QueryResult,
    rng: &mut (impl Rng + ?Sized),
) -> Result<NextStateChoice> {
    match (rule, result) {
        (NextStateRule::Ordered, QueryResult::Distribution(d)) => Ok(NextStateChoice::AllChildren(d.clone())),
        (NextStateRule::Ordered, QueryResult::Sample { .. }) => Err(Error::WrongAccessMode {
            operation: "ordered next-state selection",
            mode: AccessMode::SettableGenerative,
        }),
        (NextStateRule::Sample, QueryResult::Distribution(d)) => {
            let i = crate::mdp::sample_index(rng, d.iter().map(|t| t.prob));
            Ok(NextStateChoice::One {
                next: d[i].next,
                reward: d[i].reward,
            })
        }
        (NextStateRule::Sample, &QueryResult::Sample { next, reward }) => Ok(NextStateChoice::One { next, reward }),
    }
}
