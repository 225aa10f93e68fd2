//! Environments and offline dataset collection.

mod car_on_hill;
mod dataset;
mod lqr;
mod tabular;

pub use car_on_hill::{car_on_hill_step, CarOnHill, CarOnHillState, CAR_ON_HILL_GAMMA};
pub use dataset::{
    collect_uniform_dataset, read_dataset_binary, read_dataset_csv, write_dataset_binary, write_dataset_csv,
};
pub use lqr::{lqr_grid_dataset, lqr_step, LqrModel};
pub use tabular::{chain_mdp, tabular_step, TabularEnv, TabularMdp};

use crate::error::Result;
use crate::rng::Rng;

/// One sample `(s, a, r, s', terminal)`. Terminal transitions are never
/// bootstrapped: their empirical Bellman target is the reward alone.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<A = usize> {
    pub state: Vec<f64>,
    pub action: A,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// Episodic environment with a finite action set.
pub trait Environment {
    fn n_actions(&self) -> usize;

    fn state_dim(&self) -> usize;

    /// Puts the environment in its initial state and returns the observation.
    fn reset(&mut self) -> Vec<f64>;

    fn step(&mut self, action: usize, rng: &mut Rng) -> Result<Step>;

    /// Current observation; together with [`Environment::restore`] it fully
    /// captures the environment for checkpointing.
    fn observe(&self) -> Vec<f64>;

    fn restore(&mut self, observation: &[f64]) -> Result<()>;

    /// Steps after which a non-terminated episode is truncated (not terminal).
    fn episode_limit(&self) -> Option<usize> {
        None
    }
}
