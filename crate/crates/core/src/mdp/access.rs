use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Transition;
use crate::error::{Error, Result};

/// Anything that can answer transition queries: the true MDP or a learned model.
pub trait TransitionSource: Sync {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn gamma(&self) -> f64;
    fn is_terminal(&self, s: usize) -> bool;
    fn initial(&self) -> Cow<'_, [(usize, f64)]>;
    fn distribution(&self, s: usize, a: usize) -> Result<Cow<'_, [Transition]>>;
}

/// How an algorithm may interact with the dynamics.
///
/// Ordered from most to least permissive: descriptive answers can be turned
/// into samples, and settable access can emulate resettable access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessMode {
    SettableDescriptive,
    SettableGenerative,
    ResettableGenerative,
}

impl AccessMode {
    pub fn is_descriptive(self) -> bool {
        matches!(self, AccessMode::SettableDescriptive)
    }

    pub fn is_settable(self) -> bool {
        !matches!(self, AccessMode::ResettableGenerative)
    }

    /// True when a handle in `self` mode can serve every query `required` allows.
    pub fn satisfies(self, required: AccessMode) -> bool {
        self.rank() <= required.rank()
    }

    fn rank(self) -> u8 {
        match self {
            AccessMode::SettableDescriptive => 0,
            AccessMode::SettableGenerative => 1,
            AccessMode::ResettableGenerative => 2,
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "settable_descriptive" | "descriptive" => Some(AccessMode::SettableDescriptive),
            "settable_generative" | "generative" => Some(AccessMode::SettableGenerative),
            "resettable_generative" | "resettable" => Some(AccessMode::ResettableGenerative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryResult {
    Distribution(Vec<Transition>),
    Sample { next: usize, reward: f64 },
}

/// Deterministic generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn sample_index<R: Rng + ?Sized>(rng: &mut R, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Capability-restricted view of a transition source.
///
/// Single-owner and not meant for concurrent use; independent handles over
/// the same source can live on different threads.
pub struct AccessHandle<'m> {
    mode: AccessMode,
    source: &'m dyn TransitionSource,
    current: Option<usize>,
    seed: u64,
    rng: ChaCha8Rng,
    query_count: u64,
}

impl<'m> AccessHandle<'m> {
    pub fn new(source: &'m dyn TransitionSource, mode: AccessMode, seed: u64) -> Self {
        Self {
            mode,
            source,
            current: None,
            seed,
            rng: stream_rng(seed, 0),
            query_count: 0,
        }
    }

    /// Builds a handle from the two access axes. Irreversible descriptive
    /// access has no practical counterpart and is refused.
    pub fn from_axes(
        source: &'m dyn TransitionSource,
        settable: bool,
        descriptive: bool,
        seed: u64,
    ) -> Result<Self> {
        let mode = match (settable, descriptive) {
            (true, true) => AccessMode::SettableDescriptive,
            (true, false) => AccessMode::SettableGenerative,
            (false, false) => AccessMode::ResettableGenerative,
            (false, true) => {
                return Err(Error::Config(
                    "irreversible descriptive access is not supported".into(),
                ))
            }
        };
        Ok(Self::new(source, mode, seed))
    }

    pub fn mode(&self) -> AccessMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn query_count(&self) -> u64 {
        self.query_count
    }

    pub fn current_state(&self) -> Option<usize> {
        self.current
    }

    pub fn n_states(&self) -> usize {
        self.source.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.source.n_actions()
    }

    pub fn gamma(&self) -> f64 {
        self.source.gamma()
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.source.is_terminal(s)
    }

    pub fn source(&self) -> &'m dyn TransitionSource {
        self.source
    }

    /// Full next-state distribution of `(s, a)`.
    pub fn query_descriptive(&mut self, s: usize, a: usize) -> Result<QueryResult> {
        if self.mode != AccessMode::SettableDescriptive {
            return Err(Error::WrongAccessMode {
                operation: "query_descriptive",
                mode: self.mode,
            });
        }
        if self.source.is_terminal(s) {
            return Err(Error::TerminalQuery(s));
        }
        let dist = self.source.distribution(s, a)?.into_owned();
        self.query_count += 1;
        Ok(QueryResult::Distribution(dist))
    }

    /// One sampled outcome of `(s, a)`. On a resettable handle only the current
    /// state may be queried, and the query moves the handle forward.
    pub fn query_generative(&mut self, s: usize, a: usize) -> Result<QueryResult> {
        if self.mode == AccessMode::ResettableGenerative && self.current != Some(s) {
            return Err(Error::WrongAccessMode {
                operation: "query_generative away from the current state",
                mode: self.mode,
            });
        }
        if self.source.is_terminal(s) {
            return Err(Error::TerminalQuery(s));
        }
        let dist = self.source.distribution(s, a)?;
        let i = sample_index(&mut self.rng, dist.iter().map(|t| t.prob));
        let Transition { next, reward, .. } = dist[i];
        self.query_count += 1;
        if self.mode == AccessMode::ResettableGenerative {
            self.current = Some(next);
        }
        Ok(QueryResult::Sample { next, reward })
    }

    /// Moves a resettable handle forward from its current state.
    pub fn step(&mut self, a: usize) -> Result<(usize, f64, bool)> {
        if self.mode != AccessMode::ResettableGenerative {
            return Err(Error::WrongAccessMode {
                operation: "step",
                mode: self.mode,
            });
        }
        let s = match self.current {
            Some(s) if !self.source.is_terminal(s) => s,
            _ => return Err(Error::EpisodeEnded),
        };
        match self.query_generative(s, a)? {
            QueryResult::Sample { next, reward } => {
                Ok((next, reward, self.source.is_terminal(next)))
            }
            QueryResult::Distribution(_) => unreachable!("generative query returned a distribution"),
        }
    }

    /// Samples a start state from the initial distribution and makes it current.
    pub fn reset(&mut self) -> usize {
        let initial = self.source.initial();
        let i = sample_index(&mut self.rng, initial.iter().map(|&(_, p)| p));
        let s = initial[i].0;
        self.current = Some(s);
        s
    }
}
