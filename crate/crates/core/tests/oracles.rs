mod common;

use common::*;
use iqn::diagnostics::{
    discretized_oracle, exact_value_iteration, policy_value, reference_values, rollout_horizon, Discretization,
    EvaluationGrid, ORACLE_LOOKAHEAD,
};
use iqn::envs::{CarOnHill, TabularMdp};
use iqn::rng::{stream, Stream};
use rand::Rng as _;

fn random_mdp(seed: u64, n: usize, m: usize, gamma: f64) -> TabularMdp {
    let mut rng = stream(seed, Stream::Probe);
    let p = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
                    let total: f64 = w.iter().sum();
                    w.into_iter().map(|x| x / total).collect()
                })
                .collect()
        })
        .collect();
    let r = (0..n).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    TabularMdp::from_dense(p, r, gamma).unwrap()
}

pub fn tabular_fixtures() -> Vec<TabularMdp> {
    let mut out = vec![small_chain().mdp, iqn::envs::chain_mdp(20, 0.99, None).unwrap().mdp];
    out.extend((0..5).map(|s| random_mdp(s, 12, 3, 0.9)));
    out
}

#[test]
fn value_iteration_converges_on_every_fixture() {
    for mdp in tabular_fixtures() {
        let o = exact_value_iteration(&mdp, 1e-10).unwrap();
        assert!(o.residual <= 1e-8);
        // Each sweep contracts by γ up to rounding in values of size `scale`.
        let scale = o.q.iter().flatten().fold(1.0f64, |m, x| m.max(x.abs()));
        for w in o.residual_history.windows(2) {
            assert!(w[1] <= mdp.gamma() * w[0] + 16.0 * f64::EPSILON * scale, "{} after {}", w[1], w[0]);
        }
        // Independent residual check.
        let mut worst = 0.0f64;
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let backup = mdp.reward(s, a)
                    + mdp.gamma() * mdp.successors(s, a).iter().map(|&(n, p)| p * o.v[n]).sum::<f64>();
                worst = worst.max((backup - o.q[s][a]).abs());
            }
        }
        assert!(worst <= 1e-8, "residual {worst}");
    }
}

#[test]
fn chain_values_are_discounted_distances() {
    let o = exact_value_iteration(&small_chain().mdp, 1e-12).unwrap();
    // From state s the goal (state 5) is 5 − s moves away and pays 1 on entry.
    for s in 0..5 {
        let expected = 0.9f64.powi(4 - s as i32);
        assert!((o.v[s] - expected).abs() < 1e-10, "state {s}: {} vs {expected}", o.v[s]);
    }
    assert_eq!(o.v[5], 0.0);
}

#[test]
fn car_oracle_respects_reward_bounds_and_terminal_values() {
    let env = CarOnHill::default();
    let oracle = discretized_oracle(&env, 65, Discretization::Nearest).unwrap();
    assert!(oracle.oracle.residual <= 1e-8);
    assert!(oracle.oracle.v.iter().all(|v| (-1.0..=1.0).contains(v)));
    // Right edge moving right: full thrust leaves the box at once.
    let s = oracle.node_state(64, 40);
    assert_eq!(oracle.oracle.q[oracle.node_index(64, 40)][1], 1.0);
    assert!(s.position == 1.0);
}

#[test]
fn car_reference_is_stable_under_refinement() {
    let env = CarOnHill::default();
    let grid = EvaluationGrid::default();
    let values = |n: usize| {
        discretized_oracle(&env, n, Discretization::Nearest).unwrap().lookahead_values_on(&env, &grid, ORACLE_LOOKAHEAD).unwrap()
    };
    let (a, b) = (values(65), values(257));
    let sup = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(sup < 0.05, "{sup}");
}

#[test]
fn oracle_greedy_policy_is_near_optimal() {
    let env = CarOnHill::default();
    let grid = EvaluationGrid::default();
    let v_star = reference_values(&env, &grid).unwrap();
    let oracle = discretized_oracle(&env, 257, Discretization::Nearest).unwrap();
    let h = rollout_horizon(env.gamma, 1e-4);
    let v_pi = policy_value(&env, &grid, env.gamma, h, |s| Ok(oracle.greedy_action(s))).unwrap();
    let loss = v_star.iter().zip(&v_pi).map(|(a, b)| (a - b).abs()).sum::<f64>() / v_star.len() as f64;
    assert!(loss < 0.02, "{loss}");
    // Extending the horizon moves values by less than γ^H.
    let longer = policy_value(&env, &grid, env.gamma, h + 50, |s| Ok(oracle.greedy_action(s))).unwrap();
    for (a, b) in v_pi.iter().zip(&longer) {
        assert!((a - b).abs() < env.gamma.powi(h as i32));
    }
}
