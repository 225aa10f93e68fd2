//! Offline i-FQI over a fixed dataset with a fixed gradient budget.

use std::io::{Read, Write};

use super::checkpoint::{read_chain, write_chain};
use super::qchain::{QChain, Schedule};
use super::{apply_tick, TrainingObserver};
use crate::approximator::{AdamConfig, QFunction};
use crate::codec::{expect_magic, read_bytes, read_rng, read_u64, write_bytes, write_magic, write_rng, write_u64};
use crate::envs::Transition;
use crate::error::{IqnError, Result};
use crate::replay::sample_indices;
use crate::rng::{stream, Rng, Stream};

const IFQI_MAGIC: &[u8; 8] = b"IQNFQI01";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IfqiConfig {
    /// Window size `K`.
    pub k: usize,
    /// Bellman iterations `N` learned over the whole run.
    pub n_iterations: usize,
    /// Gradient events `B`, identical across window sizes.
    pub gradient_budget: u64,
    pub batch_size: usize,
    /// `D`, in gradient events.
    pub rolling_period: u64,
    pub gamma: f64,
    pub adam: AdamConfig,
    pub parallel: bool,
    pub seed: u64,
}

impl IfqiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(IqnError::config("K must be at least 1"));
        }
        if self.k > self.n_iterations {
            return Err(IqnError::config(format!("K = {} exceeds N = {}", self.k, self.n_iterations)));
        }
        if self.gradient_budget < (self.n_iterations - self.k + 1) as u64 {
            return Err(IqnError::config(format!(
                "budget {} is too small for {} window positions",
                self.gradient_budget,
                self.n_iterations - self.k + 1
            )));
        }
        if self.batch_size == 0 || self.rolling_period == 0 {
            return Err(IqnError::config("batch size and D must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(IqnError::config(format!("discount {} outside [0, 1)", self.gamma)));
        }
        Ok(())
    }

    /// `T = ⌊B / (N − K + 1)⌋` gradient events between shifts.
    pub fn shift_period(&self) -> u64 {
        self.gradient_budget / (self.n_iterations - self.k + 1) as u64
    }

    /// Shifts stop after `N − K`, so exactly `N` iterations enter the window.
    pub fn schedule(&self) -> Schedule {
        Schedule {
            rolling_period: self.rolling_period,
            shift_period: self.shift_period(),
            max_shifts: Some((self.n_iterations - self.k) as u64),
        }
    }
}

/// Resumable i-FQI run. Each gradient event samples one minibatch from the
/// dataset and updates every online network on it.
#[derive(Clone, Debug)]
pub struct IfqiRunner<'d, F: QFunction> {
    config: IfqiConfig,
    dataset: &'d [Transition<F::Action>],
    chain: QChain<F>,
    minibatch_rng: Rng,
    events: u64,
}

impl<'d, F: QFunction> IfqiRunner<'d, F> {
    /// `init(i, rng)` builds `θ̄_0` for `i = 0` and `θ_i` for `i = 1..=K`, in
    /// that order, from the run's initialisation stream.
    pub fn new(
        config: IfqiConfig,
        dataset: &'d [Transition<F::Action>],
        mut init: impl FnMut(usize, &mut Rng) -> F,
    ) -> Result<Self> {
        config.validate()?;
        if dataset.is_empty() {
            return Err(IqnError::input("i-FQI needs a non-empty dataset"));
        }
        let mut rng = stream(config.seed, Stream::Init);
        let target0 = init(0, &mut rng);
        let online = (1..=config.k).map(|i| init(i, &mut rng)).collect();
        let chain = QChain::new(target0, online, config.adam, config.gamma, config.schedule())?;
        Ok(Self { config, dataset, chain, minibatch_rng: stream(config.seed, Stream::Minibatch), events: 0 })
    }

    pub fn config(&self) -> &IfqiConfig {
        &self.config
    }

    pub fn chain(&self) -> &QChain<F> {
        &self.chain
    }

    pub fn events_done(&self) -> u64 {
        self.events
    }

    pub fn is_finished(&self) -> bool {
        self.events >= self.config.gradient_budget
    }

    /// One gradient event followed by any due shift and rolling update. The
    /// first call also reports the initial snapshot.
    pub fn step<O: TrainingObserver<F>>(&mut self, observer: &mut O) -> Result<()> {
        if self.is_finished() {
            return Err(IqnError::Usage("gradient budget exhausted".into()));
        }
        if self.events == 0 {
            observer.on_snapshot(&self.chain.snapshot())?;
        }
        let batch: Vec<Transition<F::Action>> =
            sample_indices(self.dataset.len(), self.config.batch_size, &mut self.minibatch_rng)
                .into_iter()
                .map(|i| self.dataset[i].clone())
                .collect();
        self.chain.gradient_update_all(&batch, self.config.parallel)?;
        self.events += 1;
        observer.on_gradient_event(self.events, &self.chain)?;
        let tick = self.chain.tick();
        apply_tick(&mut self.chain, tick, observer)
    }

    /// Runs until `events_done() == events` (or the budget ends).
    pub fn run_until<O: TrainingObserver<F>>(&mut self, events: u64, observer: &mut O) -> Result<()> {
        while self.events < events.min(self.config.gradient_budget) {
            self.step(observer)?;
        }
        Ok(())
    }

    /// Spends the rest of the budget, then reports the iterates still in the
    /// window as completed.
    pub fn finish<O: TrainingObserver<F>>(mut self, observer: &mut O) -> Result<QChain<F>> {
        self.run_until(self.config.gradient_budget, observer)?;
        let shifts = self.chain.counters().shifts;
        let online = self.chain.online();
        observer.on_iterate_completed(shifts + 1, &self.chain.targets()[0], &online[0])?;
        for j in 1..online.len() {
            observer.on_iterate_completed(shifts + 1 + j as u64, &online[j - 1], &online[j])?;
        }
        Ok(self.chain)
    }

    /// Layout: magic `IQNFQI01`, caller metadata bytes, the chain, events done,
    /// minibatch RNG state.
    pub fn write_checkpoint<W: Write>(&self, w: &mut W, meta: &[u8]) -> Result<()> {
        write_magic(w, IFQI_MAGIC)?;
        write_bytes(w, meta)?;
        write_chain(w, &self.chain)?;
        write_u64(w, self.events)?;
        write_rng(w, &self.minibatch_rng)
    }

    /// Metadata stored by [`IfqiRunner::write_checkpoint`], read without
    /// decoding the rest.
    pub fn read_checkpoint_meta<R: Read>(r: &mut R) -> Result<Vec<u8>> {
        expect_magic(r, IFQI_MAGIC)?;
        read_bytes(r)
    }

    /// Restores a run; `config` and `dataset` must be those of the original.
    pub fn resume<R: Read>(
        config: IfqiConfig,
        dataset: &'d [Transition<F::Action>],
        template: &F,
        r: &mut R,
    ) -> Result<(Self, Vec<u8>)> {
        config.validate()?;
        let meta = Self::read_checkpoint_meta(r)?;
        let chain = read_chain(r, template)?;
        if chain.k() != config.k || chain.schedule() != config.schedule() || chain.gamma() != config.gamma {
            return Err(IqnError::Format("checkpoint does not match the i-FQI configuration".into()));
        }
        let events = read_u64(r)?;
        let minibatch_rng = read_rng(r)?;
        Ok((Self { config, dataset, chain, minibatch_rng, events }, meta))
    }
}

/// Runs i-FQI to the end of its budget.
pub fn run_ifqi<F: QFunction, O: TrainingObserver<F>>(
    config: IfqiConfig,
    dataset: &[Transition<F::Action>],
    init: impl FnMut(usize, &mut Rng) -> F,
    observer: &mut O,
) -> Result<QChain<F>> {
    IfqiRunner::new(config, dataset, init)?.finish(observer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(k: usize, n: usize, budget: u64) -> IfqiConfig {
        IfqiConfig {
            k,
            n_iterations: n,
            gradient_budget: budget,
            batch_size: 100,
            rolling_period: 1,
            gamma: 0.95,
            adam: AdamConfig::default(),
            parallel: false,
            seed: 0,
        }
    }

    #[test]
    fn shift_period_arithmetic() {
        assert_eq!(config(1, 40, 20_000).shift_period(), 500);
        assert_eq!(config(20, 40, 5_000).shift_period(), 238);
        let full = config(40, 40, 20_000).schedule();
        assert_eq!(full.max_shifts, Some(0));
    }

    #[test]
    fn window_larger_than_iterations_is_a_config_error() {
        assert!(matches!(config(41, 40, 20_000).validate(), Err(IqnError::Config(_))));
        assert!(matches!(config(0, 40, 20_000).validate(), Err(IqnError::Config(_))));
    }
}
