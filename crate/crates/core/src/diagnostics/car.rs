//! Car-on-hill ground truth: a discretized oracle, greedy-policy rollouts on
//! the 17 × 17 evaluation grid, and the performance loss.

use super::oracle::{exact_value_iteration, OracleQ};
use crate::approximator::QFunction;
use crate::envs::{car_on_hill_step, CarOnHill, CarOnHillState, TabularMdp};
use crate::error::{IqnError, Result};

pub const POSITION_RANGE: (f64, f64) = (-1.0, 1.0);
pub const VELOCITY_RANGE: (f64, f64) = (-3.0, 3.0);

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Uniform state grid over the car-on-hill box; `ρ` is uniform over grid
/// states and actions.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationGrid {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub n_actions: usize,
}

impl EvaluationGrid {
    pub fn car_on_hill(n: usize) -> Self {
        assert!(n >= 2, "grid needs at least two nodes per axis");
        Self {
            positions: linspace(POSITION_RANGE.0, POSITION_RANGE.1, n),
            velocities: linspace(VELOCITY_RANGE.0, VELOCITY_RANGE.1, n),
            n_actions: 2,
        }
    }

    /// Position-major.
    pub fn states(&self) -> Vec<CarOnHillState> {
        self.positions
            .iter()
            .flat_map(|&p| self.velocities.iter().map(move |&v| CarOnHillState::new(p, v)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.positions.len() * self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for EvaluationGrid {
    fn default() -> Self {
        Self::car_on_hill(17)
    }
}

/// How off-grid successor states map back onto grid nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Discretization {
    /// Deterministic jump to the nearest node.
    Nearest,
    /// Bilinear weights over the four surrounding nodes, used as transition
    /// probabilities.
    Bilinear,
}

/// Value iteration on a `resolution × resolution` node grid of the box plus
/// one absorbing terminal state.
#[derive(Clone, Debug)]
pub struct DiscretizedOracle {
    pub resolution: usize,
    pub scheme: Discretization,
    pub oracle: OracleQ,
    positions: Vec<f64>,
    velocities: Vec<f64>,
}

/// Fractional node coordinate of `x` on `n` nodes over `[lo, hi]`, clamped.
fn node_coord(x: f64, lo: f64, hi: f64, n: usize) -> f64 {
    ((x - lo) / (hi - lo) * (n - 1) as f64).clamp(0.0, (n - 1) as f64)
}

/// Index pairs and weights for the scheme at a fractional coordinate.
fn stencil(scheme: Discretization, fi: f64, fj: f64, n: usize) -> Vec<(usize, usize, f64)> {
    match scheme {
        Discretization::Nearest => vec![(fi.round() as usize, fj.round() as usize, 1.0)],
        Discretization::Bilinear => {
            let i0 = (fi.floor() as usize).min(n - 2);
            let j0 = (fj.floor() as usize).min(n - 2);
            let (ti, tj) = (fi - i0 as f64, fj - j0 as f64);
            let mut out = Vec::with_capacity(4);
            for (di, wi) in [(0, 1.0 - ti), (1, ti)] {
                for (dj, wj) in [(0, 1.0 - tj), (1, tj)] {
                    let w = wi * wj;
                    if w > 0.0 {
                        out.push((i0 + di, j0 + dj, w));
                    }
                }
            }
            out
        }
    }
}

/// Builds the discretized MDP and solves it exactly. `resolution − 1` should
/// be a multiple of 16 so the 17 × 17 evaluation nodes are grid nodes.
pub fn discretized_oracle(env: &CarOnHill, resolution: usize, scheme: Discretization) -> Result<DiscretizedOracle> {
    if resolution < 17 {
        return Err(IqnError::input(format!("oracle resolution {resolution} is below 17")));
    }
    let n = resolution;
    let positions = linspace(POSITION_RANGE.0, POSITION_RANGE.1, n);
    let velocities = linspace(VELOCITY_RANGE.0, VELOCITY_RANGE.1, n);
    let terminal = n * n;
    let mut transitions = Vec::with_capacity(n * n + 1);
    let mut rewards = Vec::with_capacity(n * n + 1);
    for &p in &positions {
        for &v in &velocities {
            let state = CarOnHillState::new(p, v);
            let mut rows = Vec::with_capacity(2);
            let mut rs = Vec::with_capacity(2);
            for a in 0..2 {
                let (next, r, done) = car_on_hill_step(env, state, a)?;
                rs.push(r);
                if done {
                    rows.push(vec![(terminal, 1.0)]);
                    continue;
                }
                let fi = node_coord(next.position, POSITION_RANGE.0, POSITION_RANGE.1, n);
                let fj = node_coord(next.velocity, VELOCITY_RANGE.0, VELOCITY_RANGE.1, n);
                rows.push(stencil(scheme, fi, fj, n).into_iter().map(|(i, j, w)| (i * n + j, w)).collect());
            }
            transitions.push(rows);
            rewards.push(rs);
        }
    }
    transitions.push(vec![vec![(terminal, 1.0)]; 2]);
    rewards.push(vec![0.0; 2]);
    let mdp = TabularMdp::new(transitions, rewards, env.gamma)?;
    let oracle = exact_value_iteration(&mdp, 1e-10)?;
    Ok(DiscretizedOracle { resolution, scheme, oracle, positions, velocities })
}

impl DiscretizedOracle {
    pub fn node_state(&self, i: usize, j: usize) -> CarOnHillState {
        CarOnHillState::new(self.positions[i], self.velocities[j])
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        i * self.resolution + j
    }

    fn weights(&self, state: CarOnHillState) -> Vec<(usize, f64)> {
        let n = self.resolution;
        let fi = node_coord(state.position, POSITION_RANGE.0, POSITION_RANGE.1, n);
        let fj = node_coord(state.velocity, VELOCITY_RANGE.0, VELOCITY_RANGE.1, n);
        stencil(self.scheme, fi, fj, n).into_iter().map(|(i, j, w)| (i * n + j, w)).collect()
    }

    /// `Q*(state, a)` read off the grid with the oracle's own scheme.
    pub fn q_at(&self, state: CarOnHillState, action: usize) -> f64 {
        self.weights(state).iter().map(|&(s, w)| w * self.oracle.q[s][action]).sum()
    }

    pub fn value_at(&self, state: CarOnHillState) -> f64 {
        self.weights(state).iter().map(|&(s, w)| w * self.oracle.v[s]).sum()
    }

    /// Greedy action of the interpolated `Q*`, lowest index on ties.
    pub fn greedy_action(&self, state: CarOnHillState) -> usize {
        crate::approximator::argmax(&[self.q_at(state, 0), self.q_at(state, 1)])
    }

    /// `V*` at every grid state, position-major.
    pub fn values_on(&self, grid: &EvaluationGrid) -> Vec<f64> {
        grid.states().into_iter().map(|s| self.value_at(s)).collect()
    }

    /// `Q*(state, action)` from `depth` steps of the exact dynamics followed
    /// by the grid value at the leaves. Depth 0 is [`Self::q_at`].
    pub fn lookahead_q(&self, env: &CarOnHill, state: CarOnHillState, action: usize, depth: usize) -> Result<f64> {
        if depth == 0 {
            return Ok(self.q_at(state, action));
        }
        let (next, r, done) = car_on_hill_step(env, state, action)?;
        if done {
            return Ok(r);
        }
        Ok(r + env.gamma * self.lookahead_value(env, next, depth - 1)?)
    }

    pub fn lookahead_value(&self, env: &CarOnHill, state: CarOnHillState, depth: usize) -> Result<f64> {
        if depth == 0 {
            return Ok(self.value_at(state));
        }
        let q0 = self.lookahead_q(env, state, 0, depth)?;
        Ok(q0.max(self.lookahead_q(env, state, 1, depth)?))
    }

    pub fn lookahead_action(&self, env: &CarOnHill, state: CarOnHillState, depth: usize) -> Result<usize> {
        let q = [self.lookahead_q(env, state, 0, depth)?, self.lookahead_q(env, state, 1, depth)?];
        Ok(crate::approximator::argmax(&q))
    }

    /// Lookahead `V*` at every grid state, position-major.
    pub fn lookahead_values_on(&self, env: &CarOnHill, grid: &EvaluationGrid, depth: usize) -> Result<Vec<f64>> {
        grid.states().into_iter().map(|s| self.lookahead_value(env, s, depth)).collect()
    }
}

/// Grid resolution and lookahead depth of the reference `V*`. The grid value
/// alone jumps by up to ~1 between refinements at nodes whose trajectories
/// graze the left boundary; twelve exact steps settle those.
pub const ORACLE_RESOLUTION: usize = 257;
pub const ORACLE_LOOKAHEAD: usize = 12;

/// Reference `V*` on `grid` with the default oracle settings.
pub fn reference_values(env: &CarOnHill, grid: &EvaluationGrid) -> Result<Vec<f64>> {
    let oracle = discretized_oracle(env, ORACLE_RESOLUTION, Discretization::Nearest)?;
    oracle.lookahead_values_on(env, grid, ORACLE_LOOKAHEAD)
}

/// Smallest `H` with `γ^H < tol`.
pub fn rollout_horizon(gamma: f64, tol: f64) -> usize {
    let h = (tol.ln() / gamma.ln()).ceil() as usize;
    if gamma.powi(h as i32) < tol {
        h
    } else {
        h + 1
    }
}

/// Discounted return of a deterministic rollout of `policy` from each grid
/// state, truncated after `horizon` steps.
pub fn policy_value<P>(env: &CarOnHill, grid: &EvaluationGrid, gamma: f64, horizon: usize, policy: P) -> Result<Vec<f64>>
where
    P: Fn(CarOnHillState) -> Result<usize>,
{
    if gamma.powi(horizon as i32) >= 1e-4 {
        return Err(IqnError::input(format!("horizon {horizon} leaves γ^H ≥ 1e−4")));
    }
    grid.states()
        .into_iter()
        .map(|start| {
            let mut state = start;
            let (mut value, mut discount) = (0.0, 1.0);
            for _ in 0..horizon {
                let (next, r, done) = car_on_hill_step(env, state, policy(state)?)?;
                value += discount * r;
                discount *= gamma;
                if done {
                    break;
                }
                state = next;
            }
            Ok(value)
        })
        .collect()
}

/// `V^π` of the greedy policy of `q` on the grid.
pub fn greedy_policy_value<F: QFunction<Action = usize>>(
    q: &F,
    env: &CarOnHill,
    grid: &EvaluationGrid,
    gamma: f64,
    horizon: usize,
) -> Result<Vec<f64>> {
    policy_value(env, grid, gamma, horizon, |s| q.greedy_action(&[s.position, s.velocity]))
}

/// `‖V* − V^π‖_{1,ρ}` for the greedy policy of `q`, with `V*` given on the
/// grid (see [`DiscretizedOracle::values_on`]).
pub fn performance_loss<F: QFunction<Action = usize>>(
    q: &F,
    v_star: &[f64],
    env: &CarOnHill,
    grid: &EvaluationGrid,
    horizon: usize,
) -> Result<f64> {
    if v_star.len() != grid.len() {
        return Err(IqnError::input("V* does not match the evaluation grid"));
    }
    let v_pi = greedy_policy_value(q, env, grid, env.gamma, horizon)?;
    Ok(mean_abs_diff(v_star, &v_pi))
}

pub(crate) fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_for_car_discount() {
        assert_eq!(rollout_horizon(0.95, 1e-4), 180);
        assert!(0.95f64.powi(180) < 1e-4);
        assert!(0.95f64.powi(179) >= 1e-4);
    }

    #[test]
    fn grid_covers_the_box() {
        let g = EvaluationGrid::default();
        assert_eq!(g.len(), 289);
        assert_eq!(g.positions[0], -1.0);
        assert_eq!(g.positions[16], 1.0);
        assert_eq!(g.velocities[0], -3.0);
        assert_eq!(g.velocities[16], 3.0);
    }

    #[test]
    fn bilinear_stencil_weights_sum_to_one() {
        for (fi, fj) in [(0.0, 0.0), (3.25, 7.5), (16.0, 16.0), (15.999, 0.001)] {
            let s = stencil(Discretization::Bilinear, fi, fj, 17);
            let total: f64 = s.iter().map(|x| x.2).sum();
            assert!((total - 1.0).abs() < 1e-14);
            assert!(s.iter().all(|&(i, j, _)| i < 17 && j < 17));
        }
    }

    #[test]
    fn always_left_near_right_edge_never_succeeds() {
        let env = CarOnHill::default();
        let grid = EvaluationGrid { positions: vec![0.9, 0.95, 1.0], velocities: vec![-1.0, -0.5, 0.0], n_actions: 2 };
        let values = policy_value(&env, &grid, env.gamma, 180, |_| Ok(0)).unwrap();
        assert!(values.iter().all(|&v| v <= 0.0), "{values:?}");
    }

    #[test]
    fn lookahead_of_depth_zero_reads_the_grid() {
        let env = CarOnHill::default();
        let o = discretized_oracle(&env, 17, Discretization::Nearest).unwrap();
        let s = CarOnHillState::new(0.1, 0.2);
        assert_eq!(o.lookahead_value(&env, s, 0).unwrap(), o.value_at(s));
        let one = o.lookahead_q(&env, s, 1, 1).unwrap();
        let (next, r, done) = car_on_hill_step(&env, s, 1).unwrap();
        assert!(!done);
        assert_eq!(one, r + env.gamma * o.value_at(next));
    }

    #[test]
    fn short_horizon_is_rejected() {
        let env = CarOnHill::default();
        assert!(policy_value(&env, &EvaluationGrid::default(), 0.95, 50, |_| Ok(1)).is_err());
    }
}
