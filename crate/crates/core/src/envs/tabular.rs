use rand::Rng as _;

use super::{Environment, Step};
use crate::error::{IqnError, Result};
use crate::rng::Rng;

/// Finite MDP with sparse transition rows `P[s][a] = [(s', p), ...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<Vec<Vec<(usize, f64)>>>,
    rewards: Vec<Vec<f64>>,
    gamma: f64,
}

impl TabularMdp {
    pub fn new(
        transitions: Vec<Vec<Vec<(usize, f64)>>>,
        rewards: Vec<Vec<f64>>,
        gamma: f64,
    ) -> Result<Self> {
        let n_states = transitions.len();
        if n_states == 0 {
            return Err(IqnError::Model("MDP needs at least one state".into()));
        }
        let n_actions = transitions[0].len();
        if n_actions == 0 {
            return Err(IqnError::Model("MDP needs at least one action".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(IqnError::Model(format!("discount must lie in [0, 1), got {gamma}")));
        }
        if rewards.len() != n_states || rewards.iter().any(|r| r.len() != n_actions) {
            return Err(IqnError::Model("reward table shape does not match transitions".into()));
        }
        for (s, row) in transitions.iter().enumerate() {
            if row.len() != n_actions {
                return Err(IqnError::Model(format!("state {s} has {} actions, expected {n_actions}", row.len())));
            }
            for (a, dist) in row.iter().enumerate() {
                let mut total = 0.0;
                for &(next, p) in dist {
                    if next >= n_states || !(0.0..=1.0).contains(&p) {
                        return Err(IqnError::Model(format!("invalid entry ({next}, {p}) in P[{s}][{a}]")));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(IqnError::Model(format!("P[{s}][{a}] sums to {total}, not 1")));
                }
            }
        }
        Ok(Self { n_states, n_actions, transitions, rewards, gamma })
    }

    /// Builds from dense rows `P[s][a][s']`.
    pub fn from_dense(p: Vec<Vec<Vec<f64>>>, rewards: Vec<Vec<f64>>, gamma: f64) -> Result<Self> {
        let sparse = p
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|dist| dist.into_iter().enumerate().filter(|&(_, x)| x != 0.0).collect())
                    .collect()
            })
            .collect();
        Self::new(sparse, rewards, gamma)
    }

    /// Deterministic MDP from a successor table.
    pub fn deterministic(next: Vec<Vec<usize>>, rewards: Vec<Vec<f64>>, gamma: f64) -> Result<Self> {
        let sparse = next.into_iter().map(|row| row.into_iter().map(|s| vec![(s, 1.0)]).collect()).collect();
        Self::new(sparse, rewards, gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s][a]
    }

    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s][a]
    }

    fn check(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(IqnError::input(format!(
                "(s={s}, a={a}) outside {} states × {} actions",
                self.n_states, self.n_actions
            )));
        }
        Ok(())
    }
}

/// Samples `s' ~ P[s][a]` and returns `(s', R[s][a])`.
pub fn tabular_step(mdp: &TabularMdp, s: usize, a: usize, rng: &mut Rng) -> Result<(usize, f64)> {
    mdp.check(s, a)?;
    let dist = mdp.successors(s, a);
    let next = match dist {
        [(only, _)] => *only,
        _ => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = dist[dist.len() - 1].0;
            for &(next, p) in dist {
                acc += p;
                if u < acc {
                    chosen = next;
                    break;
                }
            }
            chosen
        }
    };
    Ok((next, mdp.reward(s, a)))
}

/// Episodic wrapper exposing one-hot observations of a [`TabularMdp`].
#[derive(Clone, Debug)]
pub struct TabularEnv {
    pub mdp: TabularMdp,
    pub start: usize,
    pub terminal: Vec<bool>,
    pub horizon: Option<usize>,
    current: usize,
}

impl TabularEnv {
    pub fn new(mdp: TabularMdp, start: usize, terminal: Vec<bool>, horizon: Option<usize>) -> Result<Self> {
        if start >= mdp.n_states() || terminal.len() != mdp.n_states() {
            return Err(IqnError::input("start state or terminal mask does not match the MDP"));
        }
        Ok(Self { mdp, start, terminal, horizon, current: start })
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.mdp.n_states()];
        v[s] = 1.0;
        v
    }

    pub fn state_index(observation: &[f64]) -> Option<usize> {
        observation.iter().position(|&x| x == 1.0)
    }

    pub fn current(&self) -> usize {
        self.current
    }
}

impl Environment for TabularEnv {
    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn state_dim(&self) -> usize {
        self.mdp.n_states()
    }

    fn reset(&mut self) -> Vec<f64> {
        self.current = self.start;
        self.one_hot(self.current)
    }

    fn step(&mut self, action: usize, rng: &mut Rng) -> Result<Step> {
        if self.terminal[self.current] {
            return Err(IqnError::Usage(format!("state {} is terminal", self.current)));
        }
        let (next, reward) = tabular_step(&self.mdp, self.current, action, rng)?;
        self.current = next;
        Ok(Step { next_state: self.one_hot(next), reward, terminal: self.terminal[next] })
    }

    fn observe(&self) -> Vec<f64> {
        self.one_hot(self.current)
    }

    fn restore(&mut self, observation: &[f64]) -> Result<()> {
        match Self::state_index(observation) {
            Some(s) if observation.len() == self.mdp.n_states() => {
                self.current = s;
                Ok(())
            }
            _ => Err(IqnError::input("observation is not a one-hot state")),
        }
    }

    fn episode_limit(&self) -> Option<usize> {
        self.horizon
    }
}

/// Deterministic `n`-state chain: action 0 moves left (clamped), action 1
/// right. Entering the rightmost state pays 1 and ends the episode; that
/// state is absorbing with zero reward.
pub fn chain_mdp(n: usize, gamma: f64, horizon: Option<usize>) -> Result<TabularEnv> {
    if n < 2 {
        return Err(IqnError::input("chain needs at least two states"));
    }
    let goal = n - 1;
    let mut next = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    for s in 0..n {
        if s == goal {
            next.push(vec![goal, goal]);
            rewards.push(vec![0.0, 0.0]);
        } else {
            let left = s.saturating_sub(1);
            let right = s + 1;
            next.push(vec![left, right]);
            rewards.push(vec![0.0, if right == goal { 1.0 } else { 0.0 }]);
        }
    }
    let mdp = TabularMdp::deterministic(next, rewards, gamma)?;
    let mut terminal = vec![false; n];
    terminal[goal] = true;
    TabularEnv::new(mdp, 0, terminal, horizon)
}
