//! Plain single-network FQI and DQN, written without [`QChain`](super::QChain).
//!
//! These are the reference loops that a chain with `K = 1` must reproduce
//! bitwise. They draw randomness from the same streams in the same order.

use super::operators::empirical_bellman_optimal;
use super::qchain::epsilon_greedy_action;
use super::{EpsilonSchedule, TrajectoryRecorder};
use crate::approximator::{td_loss_and_gradient, AdamConfig, AdamState, QFunction, TdSample};
use crate::envs::{Environment, Transition};
use crate::error::Result;
use crate::replay::{sample_indices, ReplayBuffer};
use crate::rng::{stream, Rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FqiConfig {
    pub n_iterations: usize,
    pub gradient_budget: u64,
    pub batch_size: usize,
    pub gamma: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DqnConfig {
    pub total_steps: u64,
    pub gradient_period: u64,
    pub target_period: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub learning_starts: usize,
    pub epsilon: EpsilonSchedule,
    pub gamma: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

fn fit_step<F: QFunction>(
    online: &mut F,
    target: &F,
    adam: &mut AdamState,
    batch: &[Transition<F::Action>],
    gamma: f64,
) -> Result<()> {
    let mut rows = Vec::with_capacity(batch.len());
    for t in batch {
        let y = empirical_bellman_optimal(target, t, gamma)?;
        rows.push(TdSample { state: &t.state, action: t.action, target: y });
    }
    let (_, grad) = td_loss_and_gradient(online, &rows)?;
    adam.step(online.params_mut(), &grad)?;
    online.project();
    Ok(())
}

/// FQI: `N` Bellman iterations, the target swapped for the online network
/// every `⌊B / N⌋` gradient events (at most `N − 1` swaps).
pub fn run_fqi<F: QFunction>(
    config: FqiConfig,
    dataset: &[Transition<F::Action>],
    mut init: impl FnMut(usize, &mut Rng) -> F,
    record: &mut TrajectoryRecorder,
) -> Result<F> {
    let mut init_rng = stream(config.seed, Stream::Init);
    let mut target = init(0, &mut init_rng);
    let mut online = init(1, &mut init_rng);
    let mut adam = AdamState::new(config.adam, online.num_params());
    let mut rng = stream(config.seed, Stream::Minibatch);
    let period = config.gradient_budget / config.n_iterations as u64;
    let mut swaps = 0;
    for event in 1..=config.gradient_budget {
        let batch: Vec<_> = sample_indices(dataset.len(), config.batch_size, &mut rng)
            .into_iter()
            .map(|i| dataset[i].clone())
            .collect();
        fit_step(&mut online, &target, &mut adam, &batch, config.gamma)?;
        record.online.push(online.params().to_vec());
        record.target.push(target.params().to_vec());
        if event % period == 0 && swaps + 1 < config.n_iterations {
            target = online.clone();
            swaps += 1;
        }
    }
    Ok(online)
}

/// DQN with a hard target update every `target_period` environment steps.
pub fn run_dqn<F: QFunction<Action = usize>, E: Environment>(
    config: DqnConfig,
    env: &mut E,
    mut init: impl FnMut(usize, &mut Rng) -> F,
    record: &mut TrajectoryRecorder,
) -> Result<(F, Vec<f64>)> {
    let mut init_rng = stream(config.seed, Stream::Init);
    let mut target = init(0, &mut init_rng);
    let mut online = init(1, &mut init_rng);
    let mut adam = AdamState::new(config.adam, online.num_params());
    let mut exploration = stream(config.seed, Stream::Exploration);
    let mut minibatch = stream(config.seed, Stream::Minibatch);
    let mut env_rng = stream(config.seed, Stream::Environment);
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut returns = Vec::new();
    let mut state = env.reset();
    let mut episode_steps = 0u64;
    let mut episode_return = 0.0;
    for step in 1..=config.total_steps {
        let q = (0..env.n_actions()).map(|a| online.q_value(&state, a)).collect::<Result<Vec<_>>>()?;
        let action = epsilon_greedy_action(&q, config.epsilon.value(step - 1), &mut exploration)?;
        let out = env.step(action, &mut env_rng)?;
        episode_steps += 1;
        episode_return += out.reward;
        let truncated = env.episode_limit().is_some_and(|l| episode_steps >= l as u64);
        buffer.push(Transition {
            state: state.clone(),
            action,
            reward: out.reward,
            next_state: out.next_state.clone(),
            terminal: out.terminal,
        });
        if out.terminal || truncated {
            returns.push(episode_return);
            episode_return = 0.0;
            episode_steps = 0;
            state = env.reset();
        } else {
            state = out.next_state;
        }
        if step % config.gradient_period == 0 && buffer.len() >= config.learning_starts.max(1) {
            let batch = buffer.sample_minibatch(config.batch_size, &mut minibatch)?;
            fit_step(&mut online, &target, &mut adam, &batch, config.gamma)?;
            record.online.push(online.params().to_vec());
            record.target.push(target.params().to_vec());
        }
        if step % config.target_period == 0 {
            target = online.clone();
        }
    }
    Ok((online, returns))
}
