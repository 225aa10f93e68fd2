//! Differentiable action-value approximators.
//!
//! Two families are provided: [`MlpParams`], a dense ReLU network with one
//! output per discrete action, and [`QuadraticQParams`], the two-parameter
//! family `Q(s, a) = M a² + G s²` over scalar states and actions. Both expose
//! their parameters as one flat vector so a single [`AdamState`] can drive
//! either of them.

mod adam;
mod mlp;
mod quadratic;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{Activation, MlpArchitecture, MlpParams};
pub(crate) use mlp::argmax;
pub use quadratic::{quadratic_q_forward, QuadraticQParams, G_BOUND, M_CEILING};

use std::fmt::Debug;

use crate::envs::Transition;
use crate::error::Result;

/// One row of a squared-TD regression: fit `Q(state, action)` to `target`.
#[derive(Clone, Copy, Debug)]
pub struct TdSample<'a, A> {
    pub state: &'a [f64],
    pub action: A,
    pub target: f64,
}

/// A parameterised action-value function `Q_θ`.
pub trait QFunction: Clone + Debug + Send + Sync {
    type Action: Copy + Debug + PartialEq + Send + Sync;

    /// Flat parameter vector `θ`.
    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    fn num_params(&self) -> usize {
        self.params().len()
    }

    fn q_value(&self, state: &[f64], action: Self::Action) -> Result<f64>;

    /// `max_a Q(state, a)`.
    fn max_q(&self, state: &[f64]) -> Result<f64>;

    fn greedy_action(&self, state: &[f64]) -> Result<Self::Action>;

    /// Loss `Σ (target − Q(s, a))²` over the batch and its exact gradient in
    /// parameter space.
    fn loss_and_gradient(&self, batch: &[TdSample<'_, Self::Action>]) -> Result<(f64, Vec<f64>)>;

    /// Maps parameters back onto the feasible set after an optimizer step.
    fn project(&mut self) {}

    /// Fills `q_sa[i] = Q(s_i, a_i)` and `max_next[i] = max_a Q(s'_i, a)`
    /// for every transition. Terminal transitions still get `max_next`
    /// evaluated; callers decide whether to bootstrap.
    fn evaluate_transitions(
        &self,
        transitions: &[Transition<Self::Action>],
        q_sa: &mut [f64],
        max_next: &mut [f64],
    ) -> Result<()> {
        for ((t, q), m) in transitions.iter().zip(q_sa.iter_mut()).zip(max_next.iter_mut()) {
            *q = self.q_value(&t.state, t.action)?;
            *m = self.max_q(&t.next_state)?;
        }
        Ok(())
    }
}

/// Squared TD loss and its gradient; thin wrapper over
/// [`QFunction::loss_and_gradient`] that rejects empty batches.
pub fn td_loss_and_gradient<F: QFunction>(
    params: &F,
    batch: &[TdSample<'_, F::Action>],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(crate::IqnError::input("empty TD batch"));
    }
    params.loss_and_gradient(batch)
}
