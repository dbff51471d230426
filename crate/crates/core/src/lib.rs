//! Composable trial-based planning and learning for finite MDPs.
//!
//! An algorithm is an [`engine::AlgorithmConfig`]: where roots come from,
//! how many trials run per root and how deep, how actions and next states
//! are chosen, how estimates are backed up, and how local results are
//! folded into a global table. [`engine::preset`] names the usual points of
//! that space (value iteration, LRTDP, LAO*, Q-learning, SARSA, TD(lambda),
//! Monte Carlo search, MCTS, Dyna-Q, prioritized sweeping, REINFORCE).
//!
//! ```
//! use trialwise::engine::{preset, run};
//! use trialwise::mdp::{make_chain, AccessHandle};
//!
//! let mdp = make_chain(3, 0.9);
//! let config = preset("value_iteration").unwrap();
//! let handle = AccessHandle::new(&mdp, config.access_required, 0);
//! let result = run(config, handle, 1000, 0).unwrap();
//! assert!(result.converged);
//! assert!((result.global.v[0] - 0.9).abs() < 1e-6);
//! ```
//!
//! [`harness`] holds exact oracles to check runs against.

pub mod backup;
pub mod control;
pub mod engine;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod model;
pub mod parallel;
pub mod solution;
pub mod select;
pub mod update;

pub use error::{Error, Result};
