//! Car-on-hill (Ernst, Geurts & Wehenkel, 2005).
//!
//! A point car of unit mass on the hill `H(p) = p² + p` for `p < 0` and
//! `H(p) = p / √(1 + 5p²)` for `p ≥ 0`, pushed by ±4 N. Each control step
//! lasts 0.1 s and is integrated with ten RK4 substeps. Leaving the box on
//! the left or exceeding `|v| > 3` fails (−1); leaving on the right with
//! `|v| ≤ 3` succeeds (+1). Both end the episode.

use super::{Environment, Step};
use crate::error::{IqnError, Result};
use crate::rng::Rng;

pub const CAR_ON_HILL_GAMMA: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CarOnHillState {
    pub position: f64,
    pub velocity: f64,
}

impl CarOnHillState {
    pub fn new(position: f64, velocity: f64) -> Self {
        Self { position, velocity }
    }

    pub fn is_terminal(&self) -> bool {
        self.position < -1.0 || self.position > 1.0 || self.velocity.abs() > 3.0
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.position, self.velocity]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CarOnHill {
    pub mass: f64,
    pub gravity: f64,
    pub force: f64,
    pub control_period: f64,
    pub substeps: usize,
    pub gamma: f64,
    pub initial: CarOnHillState,
    state: CarOnHillState,
}

impl Default for CarOnHill {
    fn default() -> Self {
        let initial = CarOnHillState::new(-0.5, 0.0);
        Self {
            mass: 1.0,
            gravity: 9.81,
            force: 4.0,
            control_period: 0.1,
            substeps: 10,
            gamma: CAR_ON_HILL_GAMMA,
            initial,
            state: initial,
        }
    }
}

/// `(H'(p), H''(p))`.
fn hill_derivatives(p: f64) -> (f64, f64) {
    if p < 0.0 {
        (2.0 * p + 1.0, 2.0)
    } else {
        let q = 1.0 + 5.0 * p * p;
        (q.powf(-1.5), -15.0 * p * q.powf(-2.5))
    }
}

impl CarOnHill {
    pub fn hill(p: f64) -> f64 {
        if p < 0.0 {
            p * p + p
        } else {
            p / (1.0 + 5.0 * p * p).sqrt()
        }
    }

    /// `p̈` for thrust `u`.
    pub fn acceleration(&self, p: f64, v: f64, u: f64) -> f64 {
        let (h1, h2) = hill_derivatives(p);
        let denom = 1.0 + h1 * h1;
        u / (self.mass * denom) - self.gravity * h1 / denom - v * v * h1 * h2 / denom
    }

    pub fn thrust(&self, action: usize) -> f64 {
        if action == 0 {
            -self.force
        } else {
            self.force
        }
    }

    /// Integrates one control period under constant thrust `u` with RK4.
    pub fn integrate(&self, state: CarOnHillState, u: f64) -> CarOnHillState {
        let h = self.control_period / self.substeps as f64;
        let (mut p, mut v) = (state.position, state.velocity);
        for _ in 0..self.substeps {
            let k1p = v;
            let k1v = self.acceleration(p, v, u);
            let k2p = v + 0.5 * h * k1v;
            let k2v = self.acceleration(p + 0.5 * h * k1p, k2p, u);
            let k3p = v + 0.5 * h * k2v;
            let k3v = self.acceleration(p + 0.5 * h * k2p, k3p, u);
            let k4p = v + h * k3v;
            let k4v = self.acceleration(p + h * k3p, k4p, u);
            p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        CarOnHillState::new(p, v)
    }

    pub fn reward(next: CarOnHillState) -> f64 {
        if next.position < -1.0 || next.velocity.abs() > 3.0 {
            -1.0
        } else if next.position > 1.0 {
            1.0
        } else {
            0.0
        }
    }

    pub fn state(&self) -> CarOnHillState {
        self.state
    }
}

/// One control step: `(next state, reward, terminal)`; terminal iff the reward is non-zero.
pub fn car_on_hill_step(
    env: &CarOnHill,
    state: CarOnHillState,
    action: usize,
) -> Result<(CarOnHillState, f64, bool)> {
    if state.is_terminal() {
        return Err(IqnError::Usage(format!("cannot step terminal car-on-hill state {state:?}")));
    }
    if action > 1 {
        return Err(IqnError::input(format!("car-on-hill has actions {{0, 1}}, got {action}")));
    }
    let next = env.integrate(state, env.thrust(action));
    let reward = CarOnHill::reward(next);
    Ok((next, reward, reward != 0.0))
}

impl Environment for CarOnHill {
    fn n_actions(&self) -> usize {
        2
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = self.initial;
        self.state.to_vec()
    }

    fn step(&mut self, action: usize, _rng: &mut Rng) -> Result<Step> {
        let (next, reward, terminal) = car_on_hill_step(self, self.state, action)?;
        self.state = next;
        Ok(Step { next_state: next.to_vec(), reward, terminal })
    }

    fn observe(&self) -> Vec<f64> {
        self.state.to_vec()
    }

    fn restore(&mut self, observation: &[f64]) -> Result<()> {
        match observation {
            [p, v] => {
                self.state = CarOnHillState::new(*p, *v);
                Ok(())
            }
            _ => Err(IqnError::input("car-on-hill observation must be (p, v)")),
        }
    }
}
