//! Scalar linear-quadratic regulator: `s' = 0.8 s − 0.9 a`,
//! `r(s, a) = 0.5 s² + 0.4 s a − 0.5 a²`.

use super::Transition;
use crate::diagnostics::lqr_oracle_qstar;
use crate::error::{IqnError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LqrModel {
    /// `s' = a_s · s + b_a · a`.
    pub a_s: f64,
    pub b_a: f64,
    /// `r = q_ss · s² + c_sa · s a + r_aa · a²`.
    pub q_ss: f64,
    pub c_sa: f64,
    pub r_aa: f64,
    pub gamma: f64,
}

impl LqrModel {
    pub const DEFAULT_GAMMA: f64 = 0.4;

    /// The regulator with the given discount. Fails unless the optimal
    /// Q-function exists: value iteration in coefficient space must converge
    /// with a strictly concave action term and `γ · gain² < 1` for the greedy
    /// closed loop.
    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(IqnError::Model(format!("discount must lie in [0, 1), got {gamma}")));
        }
        let model = Self { a_s: 0.8, b_a: -0.9, q_ss: 0.5, c_sa: 0.4, r_aa: -0.5, gamma };
        let q = lqr_oracle_qstar(&model, 1e-12)?;
        let gain = model.closed_loop_gain(-q.b_sa / (2.0 * q.c_aa));
        if gamma * gain * gain >= 1.0 {
            return Err(IqnError::Model(format!(
                "closed loop is not discounted-stable: γ·gain² = {}",
                gamma * gain * gain
            )));
        }
        Ok(model)
    }

    /// `s'/s` under the linear feedback `a = k s`.
    pub fn closed_loop_gain(&self, k: f64) -> f64 {
        self.a_s + self.b_a * k
    }

    pub fn reward(&self, s: f64, a: f64) -> f64 {
        self.q_ss * s * s + self.c_sa * s * a + self.r_aa * a * a
    }
}

impl Default for LqrModel {
    fn default() -> Self {
        Self::new(Self::DEFAULT_GAMMA).expect("default LQR discount is stable")
    }
}

/// `(s', r)`.
pub fn lqr_step(model: &LqrModel, state: f64, action: f64) -> (f64, f64) {
    (model.a_s * state + model.b_a * action, model.reward(state, action))
}

/// Offline LQR dataset on the uniform `n × n` grid over `[−1, 1]²` of
/// state-action pairs.
pub fn lqr_grid_dataset(model: &LqrModel, n: usize) -> Vec<Transition<f64>> {
    let points: Vec<f64> = (0..n)
        .map(|i| if n == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 })
        .collect();
    let mut out = Vec::with_capacity(n * n);
    for &s in &points {
        for &a in &points {
            let (next, reward) = lqr_step(model, s, a);
            out.push(Transition { state: vec![s], action: a, reward, next_state: vec![next], terminal: false });
        }
    }
    out
}
