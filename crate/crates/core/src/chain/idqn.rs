//! Online i-DQN with a replay buffer.

use std::io::{Read, Write};

use super::checkpoint::{read_chain, write_chain};
use super::qchain::{epsilon_greedy_action, QChain, Schedule};
use super::{apply_tick, TrainingObserver};
use crate::approximator::{AdamConfig, QFunction};
use crate::codec::{
    expect_magic, read_bytes, read_f64, read_f64s, read_len, read_rng, read_u64, write_bytes, write_f64, write_f64s,
    write_magic, write_rng, write_u64,
};
use crate::envs::{Environment, Transition};
use crate::error::{IqnError, Result};
use crate::replay::ReplayBuffer;
use crate::rng::{stream, Rng, Stream};

const IDQN_MAGIC: &[u8; 8] = b"IQNDQN01";

/// Linear decay from `start` to `end` over `decay_steps` environment steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        Self { start: epsilon, end: epsilon, decay_steps: 0 }
    }

    pub fn value(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        self.start + (self.end - self.start) * step as f64 / self.decay_steps as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdqnConfig {
    pub k: usize,
    /// Environment steps.
    pub total_steps: u64,
    /// `G`: environment steps per gradient event.
    pub gradient_period: u64,
    /// `T`, in environment steps.
    pub shift_period: u64,
    /// `D`, in environment steps.
    pub rolling_period: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Gradient events start once the buffer holds this many transitions.
    pub learning_starts: usize,
    pub epsilon: EpsilonSchedule,
    pub gamma: f64,
    pub adam: AdamConfig,
    pub parallel: bool,
    pub seed: u64,
}

impl IdqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(IqnError::config("K must be at least 1"));
        }
        if self.total_steps == 0 || self.gradient_period == 0 || self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(IqnError::config("steps, G, batch size and buffer capacity must be positive"));
        }
        if !(0.0..=1.0).contains(&self.epsilon.start) || !(0.0..=1.0).contains(&self.epsilon.end) {
            return Err(IqnError::config("epsilon must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(IqnError::config(format!("discount {} outside [0, 1)", self.gamma)));
        }
        self.schedule().validate()
    }

    pub fn schedule(&self) -> Schedule {
        Schedule { rolling_period: self.rolling_period, shift_period: self.shift_period, max_shifts: None }
    }
}

#[derive(Clone, Debug)]
pub struct IdqnOutcome<F: QFunction> {
    pub chain: QChain<F>,
    pub episode_returns: Vec<f64>,
    pub gradient_events: u64,
}

/// Resumable i-DQN run over an environment.
#[derive(Clone, Debug)]
pub struct IdqnRunner<F: QFunction<Action = usize>, E: Environment> {
    config: IdqnConfig,
    env: E,
    chain: QChain<F>,
    buffer: ReplayBuffer<usize>,
    behavior_rng: Rng,
    exploration_rng: Rng,
    minibatch_rng: Rng,
    env_rng: Rng,
    steps: u64,
    events: u64,
    state: Vec<f64>,
    episode_steps: u64,
    episode_return: f64,
    episode_returns: Vec<f64>,
}

impl<F: QFunction<Action = usize>, E: Environment> IdqnRunner<F, E> {
    /// `init` is called as in [`IfqiRunner::new`](super::IfqiRunner::new).
    pub fn new(config: IdqnConfig, mut env: E, mut init: impl FnMut(usize, &mut Rng) -> F) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(config.seed, Stream::Init);
        let target0 = init(0, &mut rng);
        let online = (1..=config.k).map(|i| init(i, &mut rng)).collect();
        let chain = QChain::new(target0, online, config.adam, config.gamma, config.schedule())?;
        let state = env.reset();
        Ok(Self {
            config,
            env,
            chain,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            behavior_rng: stream(config.seed, Stream::Behavior),
            exploration_rng: stream(config.seed, Stream::Exploration),
            minibatch_rng: stream(config.seed, Stream::Minibatch),
            env_rng: stream(config.seed, Stream::Environment),
            steps: 0,
            events: 0,
            state,
            episode_steps: 0,
            episode_return: 0.0,
            episode_returns: Vec::new(),
        })
    }

    pub fn config(&self) -> &IdqnConfig {
        &self.config
    }

    pub fn chain(&self) -> &QChain<F> {
        &self.chain
    }

    pub fn buffer(&self) -> &ReplayBuffer<usize> {
        &self.buffer
    }

    pub fn steps_done(&self) -> u64 {
        self.steps
    }

    pub fn gradient_events(&self) -> u64 {
        self.events
    }

    pub fn episode_returns(&self) -> &[f64] {
        &self.episode_returns
    }

    pub fn is_finished(&self) -> bool {
        self.steps >= self.config.total_steps
    }

    /// One environment step, then a gradient event every `G` steps, then any
    /// due shift and rolling update.
    pub fn step<O: TrainingObserver<F>>(&mut self, observer: &mut O) -> Result<()> {
        if self.is_finished() {
            return Err(IqnError::Usage("environment step budget exhausted".into()));
        }
        if self.steps == 0 {
            observer.on_snapshot(&self.chain.snapshot())?;
        }
        let kb = self.chain.sample_behavior_network(&mut self.behavior_rng);
        let net = &self.chain.online()[kb];
        let q = (0..self.env.n_actions()).map(|a| net.q_value(&self.state, a)).collect::<Result<Vec<_>>>()?;
        let action = epsilon_greedy_action(&q, self.config.epsilon.value(self.steps), &mut self.exploration_rng)?;
        let step = self.env.step(action, &mut self.env_rng)?;
        self.steps += 1;
        self.episode_steps += 1;
        self.episode_return += step.reward;
        let truncated = self.env.episode_limit().is_some_and(|l| self.episode_steps >= l as u64);
        let state = std::mem::take(&mut self.state);
        self.buffer.push(Transition {
            state,
            action,
            reward: step.reward,
            next_state: step.next_state.clone(),
            terminal: step.terminal,
        });
        if step.terminal || truncated {
            observer.on_episode_end(self.episode_return)?;
            self.episode_returns.push(self.episode_return);
            self.episode_return = 0.0;
            self.episode_steps = 0;
            self.state = self.env.reset();
        } else {
            self.state = step.next_state;
        }

        if self.steps % self.config.gradient_period == 0 && self.buffer.len() >= self.config.learning_starts.max(1) {
            let batch = self.buffer.sample_minibatch(self.config.batch_size, &mut self.minibatch_rng)?;
            self.chain.gradient_update_all(&batch, self.config.parallel)?;
            self.events += 1;
            observer.on_gradient_event(self.events, &self.chain)?;
        }
        let tick = self.chain.tick();
        apply_tick(&mut self.chain, tick, observer)
    }

    pub fn run_until<O: TrainingObserver<F>>(&mut self, steps: u64, observer: &mut O) -> Result<()> {
        while self.steps < steps.min(self.config.total_steps) {
            self.step(observer)?;
        }
        Ok(())
    }

    pub fn finish<O: TrainingObserver<F>>(mut self, observer: &mut O) -> Result<IdqnOutcome<F>> {
        self.run_until(self.config.total_steps, observer)?;
        Ok(IdqnOutcome { chain: self.chain, episode_returns: self.episode_returns, gradient_events: self.events })
    }

    /// Layout: magic `IQNDQN01`, caller metadata bytes, the chain, counters
    /// (steps, events, episode steps), episode return, current state,
    /// environment observation, the behaviour, exploration, minibatch and
    /// environment RNG states, the replay buffer (capacity, inserted, count,
    /// transitions as `state, action, reward, next_state, terminal`), and the
    /// completed episode returns.
    pub fn write_checkpoint<W: Write>(&self, w: &mut W, meta: &[u8]) -> Result<()> {
        write_magic(w, IDQN_MAGIC)?;
        write_bytes(w, meta)?;
        write_chain(w, &self.chain)?;
        write_u64(w, self.steps)?;
        write_u64(w, self.events)?;
        write_u64(w, self.episode_steps)?;
        write_f64(w, self.episode_return)?;
        write_f64s(w, &self.state)?;
        write_f64s(w, &self.env.observe())?;
        for rng in [&self.behavior_rng, &self.exploration_rng, &self.minibatch_rng, &self.env_rng] {
            write_rng(w, rng)?;
        }
        write_u64(w, self.buffer.capacity() as u64)?;
        write_u64(w, self.buffer.inserted())?;
        write_u64(w, self.buffer.len() as u64)?;
        for t in self.buffer.iter() {
            write_f64s(w, &t.state)?;
            write_u64(w, t.action as u64)?;
            write_f64(w, t.reward)?;
            write_f64s(w, &t.next_state)?;
            write_u64(w, u64::from(t.terminal))?;
        }
        write_f64s(w, &self.episode_returns)
    }

    pub fn read_checkpoint_meta<R: Read>(r: &mut R) -> Result<Vec<u8>> {
        expect_magic(r, IDQN_MAGIC)?;
        read_bytes(r)
    }

    /// Restores a run into `env`; `config` must be that of the original.
    pub fn resume<R: Read>(config: IdqnConfig, mut env: E, template: &F, r: &mut R) -> Result<(Self, Vec<u8>)> {
        config.validate()?;
        let meta = Self::read_checkpoint_meta(r)?;
        let chain = read_chain(r, template)?;
        if chain.k() != config.k || chain.schedule() != config.schedule() || chain.gamma() != config.gamma {
            return Err(IqnError::Format("checkpoint does not match the i-DQN configuration".into()));
        }
        let steps = read_u64(r)?;
        let events = read_u64(r)?;
        let episode_steps = read_u64(r)?;
        let episode_return = read_f64(r)?;
        let state = read_f64s(r)?;
        env.restore(&read_f64s(r)?)?;
        let behavior_rng = read_rng(r)?;
        let exploration_rng = read_rng(r)?;
        let minibatch_rng = read_rng(r)?;
        let env_rng = read_rng(r)?;
        let capacity = read_len(r, 1 << 32)?;
        let inserted = read_u64(r)?;
        let len = read_len(r, 1 << 32)?;
        let mut items = Vec::with_capacity(len);
        for _ in 0..len {
            let state = read_f64s(r)?;
            let action = read_len(r, 1 << 32)?;
            let reward = read_f64(r)?;
            let next_state = read_f64s(r)?;
            let terminal = read_u64(r)? != 0;
            items.push(Transition { state, action, reward, next_state, terminal });
        }
        if capacity != config.buffer_capacity {
            return Err(IqnError::Format("checkpoint buffer capacity differs from the configuration".into()));
        }
        let buffer = ReplayBuffer::restore(capacity, inserted, items)?;
        let episode_returns = read_f64s(r)?;
        let runner = Self {
            config,
            env,
            chain,
            buffer,
            behavior_rng,
            exploration_rng,
            minibatch_rng,
            env_rng,
            steps,
            events,
            state,
            episode_steps,
            episode_return,
            episode_returns,
        };
        Ok((runner, meta))
    }
}

/// Runs i-DQN for `config.total_steps` environment steps.
pub fn run_idqn<F: QFunction<Action = usize>, E: Environment, O: TrainingObserver<F>>(
    config: IdqnConfig,
    env: E,
    init: impl FnMut(usize, &mut Rng) -> F,
    observer: &mut O,
) -> Result<IdqnOutcome<F>> {
    IdqnRunner::new(config, env, init)?.finish(observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::{MlpArchitecture, MlpParams};
    use crate::chain::NoObserver;
    use crate::envs::chain_mdp;

    fn config(k: usize) -> IdqnConfig {
        IdqnConfig {
            k,
            total_steps: 200,
            gradient_period: 1,
            shift_period: 10,
            rolling_period: 1,
            batch_size: 8,
            buffer_capacity: 100,
            learning_starts: 8,
            epsilon: EpsilonSchedule::constant(0.5),
            gamma: 0.9,
            adam: AdamConfig::default(),
            parallel: false,
            seed: 3,
        }
    }

    fn init(_: usize, rng: &mut Rng) -> MlpParams {
        MlpParams::he_uniform(MlpArchitecture::new(5, vec![], 2).unwrap(), rng)
    }

    #[test]
    fn epsilon_schedule_is_linear() {
        let e = EpsilonSchedule { start: 1.0, end: 0.1, decay_steps: 10 };
        assert_eq!(e.value(0), 1.0);
        assert!((e.value(5) - 0.55).abs() < 1e-15);
        assert_eq!(e.value(10), 0.1);
        assert_eq!(e.value(1_000), 0.1);
    }

    #[test]
    fn two_shift_periods_give_two_shifts() {
        let env = chain_mdp(5, 0.9, Some(20)).unwrap();
        let mut runner = IdqnRunner::new(config(2), env, init).unwrap();
        runner.run_until(20, &mut NoObserver).unwrap();
        assert_eq!(runner.chain().counters().shifts, 2);
    }

    #[test]
    fn checkpoint_resume_is_bitwise() {
        let env = chain_mdp(5, 0.9, Some(20)).unwrap();
        let full = run_idqn(config(2), env.clone(), init, &mut NoObserver).unwrap();
        let mut runner = IdqnRunner::new(config(2), env.clone(), init).unwrap();
        runner.run_until(77, &mut NoObserver).unwrap();
        let mut bytes = Vec::new();
        runner.write_checkpoint(&mut bytes, b"meta").unwrap();
        let (resumed, meta) = IdqnRunner::resume(config(2), env, &init(0, &mut stream(0, Stream::Init)), &mut bytes.as_slice()).unwrap();
        assert_eq!(meta, b"meta");
        let out = resumed.finish(&mut NoObserver).unwrap();
        assert_eq!(out.chain, full.chain);
        assert_eq!(out.episode_returns, full.episode_returns);
    }
}
