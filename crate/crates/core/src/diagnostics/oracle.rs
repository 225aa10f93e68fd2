use crate::envs::TabularMdp;
use crate::error::{IqnError, Result};

/// Exact optimal action values of a finite MDP.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleQ {
    /// `q[s][a]`.
    pub q: Vec<Vec<f64>>,
    /// `v[s] = max_a q[s][a]`.
    pub v: Vec<f64>,
    /// `‖Γ* Q − Q‖_∞` of the returned `Q`.
    pub residual: f64,
    /// Sup-norm change of every sweep, in order; the last entry is `residual`.
    pub residual_history: Vec<f64>,
}

impl OracleQ {
    pub fn greedy_action(&self, s: usize) -> usize {
        crate::approximator::argmax(&self.q[s])
    }
}

const MAX_SWEEPS: usize = 1_000_000;

/// One synchronous application of `Γ*` to `q`, written into `out`.
fn bellman_sweep(mdp: &TabularMdp, v: &[f64], out: &mut [Vec<f64>]) {
    let gamma = mdp.gamma();
    for (s, row) in out.iter_mut().enumerate() {
        for (a, q) in row.iter_mut().enumerate() {
            let expected: f64 = mdp.successors(s, a).iter().map(|&(next, p)| p * v[next]).sum();
            *q = mdp.reward(s, a) + gamma * expected;
        }
    }
}

fn state_values(q: &[Vec<f64>], v: &mut [f64]) {
    for (vs, row) in v.iter_mut().zip(q) {
        *vs = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
}

/// Value iteration from `Q = 0` with synchronous sweeps until the sup-norm
/// Bellman residual of the current iterate is at most `tol`.
pub fn exact_value_iteration(mdp: &TabularMdp, tol: f64) -> Result<OracleQ> {
    if !(mdp.gamma() < 1.0) {
        return Err(IqnError::Model("value iteration needs γ < 1".into()));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut q = vec![vec![0.0; na]; ns];
    let mut next = q.clone();
    let mut v = vec![0.0; ns];
    let mut history = Vec::new();
    for _ in 0..MAX_SWEEPS {
        bellman_sweep(mdp, &v, &mut next);
        let residual = q
            .iter()
            .flatten()
            .zip(next.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        history.push(residual);
        if residual <= tol {
            return Ok(OracleQ { q, v, residual, residual_history: history });
        }
        std::mem::swap(&mut q, &mut next);
        state_values(&q, &mut v);
    }
    Err(IqnError::Model(format!("value iteration did not reach tolerance {tol} in {MAX_SWEEPS} sweeps")))
}
