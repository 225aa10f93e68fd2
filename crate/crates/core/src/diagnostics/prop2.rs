//! The QN loss summed over a dataset differs from `M · ‖ΓQ̄ − Q_θ‖²_{2,ν}`
//! by a constant in `θ` whenever the empirical backups average to the true
//! backup on every state-action pair of the dataset.

use crate::approximator::QFunction;
use crate::chain::empirical_bellman_optimal;
use crate::envs::Transition;
use crate::error::{IqnError, Result};

/// How `ΓQ̄(s, a)` is known.
pub enum BackupModel<'a, A> {
    /// Every sample of a state-action pair has the same outcome; `ΓQ̄` is the
    /// common empirical backup.
    Deterministic,
    /// `ΓQ̄(s, a)` from a model; the dataset's per-pair mean of empirical
    /// backups must match it.
    Expected(&'a dyn Fn(&[f64], A) -> Result<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prop2Outcome {
    /// `Σ ℒ_QN(θ) − M · ‖ΓQ̄ − Q_θ‖²_{2,ν}` for each probe.
    pub differences: Vec<f64>,
    /// `max − min` of `differences`.
    pub spread: f64,
    /// Largest `|Σ ℒ_QN(θ)|` over the probes, the reference for relative checks.
    pub scale: f64,
}

/// Indices of the samples sharing each distinct state-action pair.
fn groups<A: PartialEq>(data: &[Transition<A>]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, t) in data.iter().enumerate() {
        match out.iter_mut().find(|g| data[g[0]].state == t.state && data[g[0]].action == t.action) {
            Some(g) => g.push(i),
            None => out.push(vec![i]),
        }
    }
    out
}

/// Checks the expectation assumption and evaluates the identity on `probes`.
pub fn prop2_equivalence_check<F: QFunction>(
    target: &F,
    data: &[Transition<F::Action>],
    gamma: f64,
    model: BackupModel<'_, F::Action>,
    probes: &[F],
) -> Result<Prop2Outcome> {
    if data.is_empty() || probes.is_empty() {
        return Err(IqnError::input("need a non-empty dataset and at least one probe"));
    }
    let backups = data.iter().map(|t| empirical_bellman_optimal(target, t, gamma)).collect::<Result<Vec<_>>>()?;
    let mut expected = vec![0.0; data.len()];
    for g in groups(data) {
        let truth = match &model {
            BackupModel::Deterministic => {
                let first = &data[g[0]];
                if g.iter().any(|&i| data[i].next_state != first.next_state || data[i].reward != first.reward || data[i].terminal != first.terminal) {
                    return Err(IqnError::Precondition(
                        "samples of one state-action pair disagree; the data is not deterministic".into(),
                    ));
                }
                backups[g[0]]
            }
            BackupModel::Expected(f) => {
                let first = &data[g[0]];
                let truth = f(&first.state, first.action)?;
                let mean = g.iter().map(|&i| backups[i]).sum::<f64>() / g.len() as f64;
                if (mean - truth).abs() > 1e-12 * (1.0 + truth.abs()) {
                    return Err(IqnError::Precondition(format!(
                        "empirical backups average to {mean}, not the expected {truth}"
                    )));
                }
                truth
            }
        };
        for &i in &g {
            expected[i] = truth;
        }
    }
    let m = data.len() as f64;
    let mut differences = Vec::with_capacity(probes.len());
    let mut scale = 0.0f64;
    for probe in probes {
        let (mut loss, mut dist) = (0.0, 0.0);
        for (i, t) in data.iter().enumerate() {
            let q = probe.q_value(&t.state, t.action)?;
            loss += (backups[i] - q).powi(2);
            dist += (expected[i] - q).powi(2);
        }
        scale = scale.max(loss.abs());
        differences.push(loss - m * (dist / m));
    }
    let max = differences.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = differences.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Prop2Outcome { differences, spread: max - min, scale })
}
