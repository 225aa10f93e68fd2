//! Exact optimal Q-function of the scalar LQR and the two-parameter
//! trajectory experiment comparing one-step QN with a two-network chain.

use crate::approximator::{AdamConfig, QuadraticQParams};
use crate::chain::{QChain, Schedule};
use crate::envs::{lqr_grid_dataset, LqrModel, Transition};
use crate::error::{IqnError, Result};

/// `Q(s, a) = a_ss s² + b_sa s a + c_aa a²`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LqrQ {
    pub a_ss: f64,
    pub b_sa: f64,
    pub c_aa: f64,
}

impl LqrQ {
    pub fn value(&self, s: f64, a: f64) -> f64 {
        self.a_ss * s * s + self.b_sa * s * a + self.c_aa * a * a
    }

    /// `P` with `max_a Q(s, a) = P s²`.
    pub fn value_coefficient(&self) -> Result<f64> {
        if self.c_aa < 0.0 {
            Ok(self.a_ss - self.b_sa * self.b_sa / (4.0 * self.c_aa))
        } else if self.c_aa == 0.0 && self.b_sa == 0.0 {
            Ok(self.a_ss)
        } else {
            Err(IqnError::Model(format!("Q is unbounded in the action: {self:?}")))
        }
    }
}

/// Coefficients of `Γ* Q`, substituting `s' = a_s s + b_a a` into `r + γ P s'²`.
pub fn bellman_coefficients(model: &LqrModel, q: LqrQ) -> Result<LqrQ> {
    let gp = model.gamma * q.value_coefficient()?;
    Ok(LqrQ {
        a_ss: model.q_ss + gp * model.a_s * model.a_s,
        b_sa: model.c_sa + 2.0 * gp * model.a_s * model.b_a,
        c_aa: model.r_aa + gp * model.b_a * model.b_a,
    })
}

/// Value iteration in coefficient space from `Q = 0` until no coefficient
/// moves by more than `tol`.
pub fn lqr_oracle_qstar(model: &LqrModel, tol: f64) -> Result<LqrQ> {
    let mut q = LqrQ::default();
    for _ in 0..100_000 {
        let next = bellman_coefficients(model, q)?;
        if next.c_aa >= 0.0 {
            return Err(IqnError::Model(format!("action coefficient became non-negative: {next:?}")));
        }
        let change = (next.a_ss - q.a_ss).abs().max((next.b_sa - q.b_sa).abs()).max((next.c_aa - q.c_aa).abs());
        q = next;
        if change <= tol {
            return Ok(q);
        }
        if !change.is_finite() {
            break;
        }
    }
    Err(IqnError::Model("LQR value iteration diverged".into()))
}

/// `‖Q* − Q_θ‖_{2,ν}` on the experiment's state-action grid.
pub fn lqr_distance(qstar: &LqrQ, params: &QuadraticQParams, data: &[Transition<f64>]) -> f64 {
    let sum: f64 = data
        .iter()
        .map(|t| {
            let (s, a) = (t.state[0], t.action);
            (qstar.value(s, a) - (params.m() * a * a + params.g() * s * s)).powi(2)
        })
        .sum();
    (sum / data.len() as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LqrTrajectory {
    pub k: usize,
    /// `(M, G)` of every online network, before the first step and after each.
    pub path: Vec<Vec<[f64; 2]>>,
    /// Distance of every online network to `Q*` at the same instants.
    pub distances: Vec<Vec<f64>>,
    pub qstar: LqrQ,
}

impl LqrTrajectory {
    /// Distance of the last network of the chain after the last step.
    pub fn final_distance(&self) -> f64 {
        *self.distances.last().and_then(|d| d.last()).expect("trajectory is never empty")
    }
}

/// `steps` full-batch Adam steps from the shared start `init` (`θ̄_0` and
/// every `θ_k`), with rolling updates after every step and no window shift.
/// `ν` is the uniform `grid × grid` state-action grid over `[−1, 1]²`.
pub fn lqr_trajectory_experiment(
    model: &LqrModel,
    k: usize,
    steps: usize,
    learning_rate: f64,
    init: QuadraticQParams,
    grid: usize,
) -> Result<LqrTrajectory> {
    if !(1..=2).contains(&k) {
        return Err(IqnError::input(format!("the LQR experiment compares K = 1 and K = 2, got {k}")));
    }
    let init = init.projected();
    let qstar = lqr_oracle_qstar(model, 1e-12)?;
    let data = lqr_grid_dataset(model, grid);
    let schedule = Schedule { rolling_period: 1, shift_period: u64::MAX, max_shifts: Some(0) };
    let adam = AdamConfig::with_learning_rate(learning_rate);
    let mut chain = QChain::new(init, vec![init; k], adam, model.gamma, schedule)?;
    let record = |chain: &QChain<QuadraticQParams>, path: &mut Vec<Vec<[f64; 2]>>, dist: &mut Vec<Vec<f64>>| {
        path.push(chain.online().iter().map(|p| [p.m(), p.g()]).collect());
        dist.push(chain.online().iter().map(|p| lqr_distance(&qstar, p, &data)).collect());
    };
    let (mut path, mut distances) = (Vec::new(), Vec::new());
    record(&chain, &mut path, &mut distances);
    for _ in 0..steps {
        chain.gradient_update_all(&data, false)?;
        if chain.tick().rolling {
            chain.rolling_target_update();
        }
        record(&chain, &mut path, &mut distances);
    }
    Ok(LqrTrajectory { k, path, distances, qstar })
}
