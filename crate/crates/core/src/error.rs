use thiserror::Error;

use crate::mdp::AccessMode;

/// Every failure the engine, its components and the harness can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("WrongAccessMode: {operation} is not available on a {mode:?} handle")]
    WrongAccessMode {
        operation: &'static str,
        mode: AccessMode,
    },
    #[error("TerminalQuery: state {0} is terminal")]
    TerminalQuery(usize),
    #[error("EpisodeEnded: the current state is terminal, reset the handle")]
    EpisodeEnded,
    #[error("ParseError at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("ValidationError: {0}")]
    Validation(String),
    #[error("InvalidLayout: {0}")]
    InvalidLayout(String),
    #[error("UnsupportedInit: {0}")]
    UnsupportedInit(String),
    #[error("NotOnFrontier: node {0} is not on the frontier")]
    NotOnFrontier(usize),
    #[error("NoVisitedChildren: state {0} has no visited action")]
    NoVisitedChildren(usize),
    #[error("MissingHeuristicEntry: no heuristic value for state {0}")]
    MissingHeuristicEntry(usize),
    #[error("MissingChild: no value for action {0}")]
    MissingChild(usize),
    #[error("DistributionRequired: {0}")]
    DistributionRequired(&'static str),
    #[error("MissingReturns: trace carries no return estimates")]
    MissingReturns,
    #[error("UnvisitedPair: ({0}, {1}) was never observed")]
    UnvisitedPair(usize, usize),
    #[error("ConfigError: {0}")]
    Config(String),
    #[error("UnknownPreset: {0}")]
    UnknownPreset(String),
    #[error("NonConvergent: residual {residual} after {iterations} iterations")]
    NonConvergent { iterations: usize, residual: f64 },
    #[error("IoError: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
