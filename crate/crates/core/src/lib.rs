//! Iterated Q-Networks.
//!
//! A chain of `K` online approximators learns `K` consecutive Bellman updates
//! at once, each online network regressing onto the empirical Bellman update
//! of the target network just before it in the chain. With `K = 1` the chain
//! degenerates to the usual single online/target pair of DQN and FQI.
//!
//! The crate is organised as:
//!
//! - [`approximator`]: small MLPs and the constrained quadratic family, their
//!   squared-TD gradients, and Adam.
//! - [`envs`]: car-on-hill, the scalar LQR, tabular MDPs, dataset collection.
//! - [`replay`]: FIFO replay buffer and uniform minibatch sampling.
//! - [`chain`]: the chain itself, its update rules, and the offline (i-FQI)
//!   and online (i-DQN) training loops, plus sequential baselines.
//! - [`diagnostics`]: exact oracles, approximation errors, the sufficient
//!   condition for a decreasing error sum, performance loss and aggregation.

pub mod approximator;
pub mod chain;
pub mod codec;
pub mod diagnostics;
pub mod envs;
pub mod error;
pub mod replay;
pub mod rng;

pub use error::{IqnError, Result};
