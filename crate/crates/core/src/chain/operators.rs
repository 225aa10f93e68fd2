//! Empirical Bellman operators over sampled transitions.

use crate::approximator::QFunction;
use crate::envs::{Step, Transition};
use crate::error::{IqnError, Result};

/// `Γ̂Q(s, a) = r + γ max_a' Q(s', a')`, or `r` alone when `s'` is terminal.
pub fn empirical_bellman_optimal<F: QFunction>(target: &F, t: &Transition<F::Action>, gamma: f64) -> Result<f64> {
    if t.terminal {
        return Ok(t.reward);
    }
    Ok(t.reward + gamma * target.max_q(&t.next_state)?)
}

/// `Γ̂^π Q(s, a) = r + γ Q(s', π(s'))`, or `r` when terminal.
pub fn empirical_bellman_policy<F, P>(target: &F, t: &Transition<F::Action>, gamma: f64, policy: P) -> Result<f64>
where
    F: QFunction,
    P: Fn(&[f64]) -> F::Action,
{
    if t.terminal {
        return Ok(t.reward);
    }
    Ok(t.reward + gamma * target.q_value(&t.next_state, policy(&t.next_state))?)
}

/// Leading transitions of `window` that an `n`-step return consumes: the
/// first `n`, cut after the first terminal one. Errors on gaps between
/// consecutive transitions or on a window that ends early without a terminal.
fn nstep_span<A>(window: &[Transition<A>], n: usize) -> Result<&[Transition<A>]> {
    if n == 0 || window.is_empty() {
        return Err(IqnError::input("n-step return needs n ≥ 1 and a non-empty window"));
    }
    let mut len = n.min(window.len());
    if let Some(i) = window[..len].iter().position(|t| t.terminal) {
        len = i + 1;
    }
    let span = &window[..len];
    for (i, pair) in span.windows(2).enumerate() {
        if pair[0].next_state != pair[1].state {
            return Err(IqnError::input(format!("window transitions {i} and {} are not consecutive", i + 1)));
        }
    }
    if len < n && !span[len - 1].terminal {
        return Err(IqnError::input(format!("window of {len} transitions is shorter than n = {n} without reaching a terminal")));
    }
    Ok(span)
}

/// Folds `r_i + γ · acc` from the last transition back to the first. The
/// backward fold makes the `n`-step return bitwise equal to `n` nested
/// applications of the one-step operator.
fn fold_returns<A>(span: &[Transition<A>], bootstrap: f64, gamma: f64) -> f64 {
    span.iter().rev().fold(bootstrap, |acc, t| t.reward + gamma * acc)
}

/// `Σ_{i<n} γ^i r_i + γ^n max_a' Q(s_n, a')`, with no bootstrap past a terminal.
pub fn empirical_bellman_nstep<F: QFunction>(
    target: &F,
    window: &[Transition<F::Action>],
    gamma: f64,
    n: usize,
) -> Result<f64> {
    let span = nstep_span(window, n)?;
    let last = &span[span.len() - 1];
    let bootstrap = if last.terminal { 0.0 } else { target.max_q(&last.next_state)? };
    Ok(fold_returns(span, bootstrap, gamma))
}

/// Policy-evaluation variant: bootstraps with `Q(s_n, π(s_n))`.
pub fn empirical_bellman_nstep_policy<F, P>(
    target: &F,
    window: &[Transition<F::Action>],
    gamma: f64,
    n: usize,
    policy: P,
) -> Result<f64>
where
    F: QFunction,
    P: Fn(&[f64]) -> F::Action,
{
    let span = nstep_span(window, n)?;
    let last = &span[span.len() - 1];
    let bootstrap = if last.terminal { 0.0 } else { target.q_value(&last.next_state, policy(&last.next_state))? };
    Ok(fold_returns(span, bootstrap, gamma))
}

/// `(Γ*)^depth Q(state, action)` for a deterministic model, maximising over
/// actions at every intermediate state. `model(s, a)` returns the step.
pub fn composed_optimal_backup<F, M>(
    target: &F,
    model: &M,
    state: &[f64],
    action: usize,
    depth: usize,
    gamma: f64,
    n_actions: usize,
) -> Result<f64>
where
    F: QFunction<Action = usize>,
    M: Fn(&[f64], usize) -> Result<Step>,
{
    if depth == 0 {
        return target.q_value(state, action);
    }
    let step = model(state, action)?;
    if step.terminal {
        return Ok(step.reward);
    }
    let mut best = f64::NEG_INFINITY;
    for a in 0..n_actions {
        best = best.max(composed_optimal_backup(target, model, &step.next_state, a, depth - 1, gamma, n_actions)?);
    }
    Ok(step.reward + gamma * best)
}
