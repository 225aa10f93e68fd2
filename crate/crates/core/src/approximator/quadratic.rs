use super::{QFunction, TdSample};
use crate::error::{IqnError, Result};

/// Largest admissible value of `M`; keeps the action curvature strictly negative.
pub const M_CEILING: f64 = -1e-6;
/// Bound on `|G|`.
pub const G_BOUND: f64 = 0.4;

/// `Q(s, a) = M a² + G s²` over scalar states and actions, with `M < 0` and
/// `|G| ≤ 0.4` enforced by [`QFunction::project`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticQParams {
    theta: [f64; 2],
}

impl QuadraticQParams {
    pub fn new(m: f64, g: f64) -> Self {
        Self { theta: [m, g] }
    }

    pub fn m(&self) -> f64 {
        self.theta[0]
    }

    pub fn g(&self) -> f64 {
        self.theta[1]
    }

    pub fn projected(mut self) -> Self {
        self.project();
        self
    }

    /// `∂Q/∂(M, G) = (a², s²)`.
    pub fn gradient_at(state: f64, action: f64) -> [f64; 2] {
        [action * action, state * state]
    }

    pub fn is_feasible(&self) -> bool {
        self.m() <= M_CEILING && self.g().abs() <= G_BOUND
    }
}

pub fn quadratic_q_forward(params: &QuadraticQParams, state: f64, action: f64) -> f64 {
    params.m() * action * action + params.g() * state * state
}

fn scalar(state: &[f64]) -> Result<f64> {
    match state {
        [s] => Ok(*s),
        _ => Err(IqnError::input(format!("quadratic Q expects a scalar state, got dimension {}", state.len()))),
    }
}

impl QFunction for QuadraticQParams {
    type Action = f64;

    fn params(&self) -> &[f64] {
        &self.theta
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn q_value(&self, state: &[f64], action: f64) -> Result<f64> {
        Ok(quadratic_q_forward(self, scalar(state)?, action))
    }

    fn max_q(&self, state: &[f64]) -> Result<f64> {
        let s = scalar(state)?;
        if self.m() > 0.0 {
            return Ok(f64::INFINITY);
        }
        // M ≤ 0: the maximising action is a = 0.
        Ok(self.g() * s * s)
    }

    fn greedy_action(&self, state: &[f64]) -> Result<f64> {
        scalar(state)?;
        Ok(0.0)
    }

    fn loss_and_gradient(&self, batch: &[TdSample<'_, f64>]) -> Result<(f64, Vec<f64>)> {
        let mut loss = 0.0;
        let mut grad = vec![0.0; 2];
        for sample in batch {
            let s = scalar(sample.state)?;
            let residual = sample.target - quadratic_q_forward(self, s, sample.action);
            loss += residual * residual;
            let d = Self::gradient_at(s, sample.action);
            grad[0] += -2.0 * residual * d[0];
            grad[1] += -2.0 * residual * d[1];
        }
        Ok((loss, grad))
    }

    fn project(&mut self) {
        self.theta[0] = self.theta[0].min(M_CEILING);
        self.theta[1] = self.theta[1].clamp(-G_BOUND, G_BOUND);
    }
}
