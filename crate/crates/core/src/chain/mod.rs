//! The i-QN chain and its training loops.
//!
//! [`QChain`] holds the online and target parameters and applies the three
//! update rules (gradient event, rolling target update every `D`, window shift
//! every `T`). [`IfqiRunner`] drives it offline over a fixed dataset with a
//! fixed gradient budget; [`IdqnRunner`] drives it online with a replay
//! buffer. The [`sequential`] module holds plain FQI and DQN loops written
//! without the chain, used to check that `K = 1` recovers them exactly.

mod checkpoint;
mod idqn;
mod ifqi;
mod operators;
mod qchain;
pub mod sequential;

pub use checkpoint::{read_chain, write_chain, CHECKPOINT_MAGIC};
pub use idqn::{run_idqn, EpsilonSchedule, IdqnConfig, IdqnOutcome, IdqnRunner};
pub use ifqi::{run_ifqi, IfqiConfig, IfqiRunner};
pub use operators::{
    composed_optimal_backup, empirical_bellman_nstep, empirical_bellman_nstep_policy, empirical_bellman_optimal,
    empirical_bellman_policy,
};
pub use qchain::{
    epsilon_greedy_action, sample_behavior_network, Counters, QChain, Schedule, SnapshotRecord, Tick,
};

use crate::approximator::QFunction;
use crate::error::Result;

/// Hooks called by the training loops.
pub trait TrainingObserver<F: QFunction> {
    /// After each gradient event (1-based count), before any schedule update.
    fn on_gradient_event(&mut self, _event: u64, _chain: &QChain<F>) -> Result<()> {
        Ok(())
    }

    /// At the start of a run and after every rolling target update.
    fn on_snapshot(&mut self, _snapshot: &SnapshotRecord<F>) -> Result<()> {
        Ok(())
    }

    /// Bellman iteration `iteration` (1-based) left the window: `completed`
    /// is the learned `Q_iteration`, fitted to the update of `previous`.
    fn on_iterate_completed(&mut self, _iteration: u64, _previous: &F, _completed: &F) -> Result<()> {
        Ok(())
    }

    fn on_episode_end(&mut self, _episode_return: f64) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoObserver;

impl<F: QFunction> TrainingObserver<F> for NoObserver {}

impl<F: QFunction, O: TrainingObserver<F> + ?Sized> TrainingObserver<F> for &mut O {
    fn on_gradient_event(&mut self, event: u64, chain: &QChain<F>) -> Result<()> {
        (**self).on_gradient_event(event, chain)
    }

    fn on_snapshot(&mut self, snapshot: &SnapshotRecord<F>) -> Result<()> {
        (**self).on_snapshot(snapshot)
    }

    fn on_iterate_completed(&mut self, iteration: u64, previous: &F, completed: &F) -> Result<()> {
        (**self).on_iterate_completed(iteration, previous, completed)
    }

    fn on_episode_end(&mut self, episode_return: f64) -> Result<()> {
        (**self).on_episode_end(episode_return)
    }
}

impl<F: QFunction, A: TrainingObserver<F>, B: TrainingObserver<F>> TrainingObserver<F> for (A, B) {
    fn on_gradient_event(&mut self, event: u64, chain: &QChain<F>) -> Result<()> {
        self.0.on_gradient_event(event, chain)?;
        self.1.on_gradient_event(event, chain)
    }

    fn on_snapshot(&mut self, snapshot: &SnapshotRecord<F>) -> Result<()> {
        self.0.on_snapshot(snapshot)?;
        self.1.on_snapshot(snapshot)
    }

    fn on_iterate_completed(&mut self, iteration: u64, previous: &F, completed: &F) -> Result<()> {
        self.0.on_iterate_completed(iteration, previous, completed)?;
        self.1.on_iterate_completed(iteration, previous, completed)
    }

    fn on_episode_end(&mut self, episode_return: f64) -> Result<()> {
        self.0.on_episode_end(episode_return)?;
        self.1.on_episode_end(episode_return)
    }
}

/// Records `(θ_1, θ̄_0)` after every gradient event.
#[derive(Clone, Debug, Default)]
pub struct TrajectoryRecorder {
    pub online: Vec<Vec<f64>>,
    pub target: Vec<Vec<f64>>,
}

impl<F: QFunction> TrainingObserver<F> for TrajectoryRecorder {
    fn on_gradient_event(&mut self, _event: u64, chain: &QChain<F>) -> Result<()> {
        self.online.push(chain.online()[0].params().to_vec());
        self.target.push(chain.targets()[0].params().to_vec());
        Ok(())
    }
}

/// Applies a tick's window shift and rolling update in order, reporting the
/// completed iterate and the new snapshot to `observer`.
pub(crate) fn apply_tick<F: QFunction, O: TrainingObserver<F>>(
    chain: &mut QChain<F>,
    tick: Tick,
    observer: &mut O,
) -> Result<()> {
    if tick.shift {
        let iteration = chain.counters().shifts + 1;
        observer.on_iterate_completed(iteration, &chain.targets()[0], &chain.online()[0])?;
        chain.window_shift();
    }
    if tick.rolling {
        let snapshot = chain.rolling_target_update();
        observer.on_snapshot(&snapshot)?;
    }
    Ok(())
}
