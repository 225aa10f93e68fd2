//! A chain with one online network is FQI / DQN, bit for bit.

mod common;

use common::*;
use iqn::approximator::MlpArchitecture;
use iqn::chain::sequential::{run_dqn, run_fqi, DqnConfig, FqiConfig};
use iqn::chain::{run_idqn, run_ifqi, EpsilonSchedule, IdqnConfig, IfqiConfig, TrajectoryRecorder};
use iqn::envs::{CarOnHill, Transition};

fn fqi_pair(data: &[Transition], arch: MlpArchitecture, seed: u64) -> (TrajectoryRecorder, TrajectoryRecorder) {
    let (n, budget, batch, gamma, lr) = (8, 240, 32, 0.95, 3e-3);
    let mut iterated = TrajectoryRecorder::default();
    let config = IfqiConfig {
        k: 1,
        n_iterations: n,
        gradient_budget: budget,
        batch_size: batch,
        rolling_period: 1,
        gamma,
        adam: adam(lr),
        parallel: false,
        seed,
    };
    run_ifqi(config, data, he_init(arch.clone()), &mut iterated).unwrap();
    let mut plain = TrajectoryRecorder::default();
    let config = FqiConfig { n_iterations: n, gradient_budget: budget, batch_size: batch, gamma, adam: adam(lr), seed };
    run_fqi(config, data, he_init(arch), &mut plain).unwrap();
    (iterated, plain)
}

fn assert_same(a: &TrajectoryRecorder, b: &TrajectoryRecorder) {
    assert!(!a.online.is_empty());
    assert_eq!(a.online.len(), b.online.len());
    for (x, y) in a.online.iter().zip(&b.online).chain(a.target.iter().zip(&b.target)) {
        let xb: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        let yb: Vec<u64> = y.iter().map(|v| v.to_bits()).collect();
        assert_eq!(xb, yb);
    }
}

#[test]
fn ifqi_with_one_network_is_fqi_on_car_on_hill() {
    for seed in 0..5 {
        let data = car_dataset(2_000, seed);
        let (a, b) = fqi_pair(&data, car_mlp(), seed);
        assert_same(&a, &b);
        // The target must actually have moved for the comparison to mean anything.
        assert_ne!(a.target.first(), a.target.last());
    }
}

#[test]
fn ifqi_with_one_network_is_fqi_on_the_chain() {
    for seed in 0..5 {
        let data = chain_dataset(500, seed);
        let (a, b) = fqi_pair(&data, MlpArchitecture::new(6, vec![16], 2).unwrap(), seed);
        assert_same(&a, &b);
    }
}

fn dqn_configs(seed: u64, target_period: u64) -> (IdqnConfig, DqnConfig) {
    let epsilon = EpsilonSchedule { start: 1.0, end: 0.1, decay_steps: 400 };
    let idqn = IdqnConfig {
        k: 1,
        total_steps: 800,
        gradient_period: 2,
        shift_period: target_period,
        rolling_period: 1,
        batch_size: 16,
        buffer_capacity: 500,
        learning_starts: 50,
        epsilon,
        gamma: 0.95,
        adam: adam(1e-3),
        parallel: false,
        seed,
    };
    let dqn = DqnConfig {
        total_steps: 800,
        gradient_period: 2,
        target_period,
        batch_size: 16,
        buffer_capacity: 500,
        learning_starts: 50,
        epsilon,
        gamma: 0.95,
        adam: adam(1e-3),
        seed,
    };
    (idqn, dqn)
}

#[test]
fn idqn_with_one_network_is_dqn_on_car_on_hill() {
    for seed in 0..5 {
        let (ic, dc) = dqn_configs(seed, 50);
        let mut a = TrajectoryRecorder::default();
        let out = run_idqn(ic, CarOnHill::default(), he_init(car_mlp()), &mut a).unwrap();
        let mut b = TrajectoryRecorder::default();
        let (_, returns) = run_dqn(dc, &mut CarOnHill::default(), he_init(car_mlp()), &mut b).unwrap();
        assert_same(&a, &b);
        assert_eq!(out.episode_returns, returns);
    }
}

#[test]
fn idqn_with_one_network_is_dqn_on_the_chain() {
    let arch = MlpArchitecture::new(6, vec![16], 2).unwrap();
    for seed in 0..5 {
        let (ic, dc) = dqn_configs(seed, 30);
        let mut a = TrajectoryRecorder::default();
        let out = run_idqn(ic, small_chain(), he_init(arch.clone()), &mut a).unwrap();
        let mut b = TrajectoryRecorder::default();
        let (_, returns) = run_dqn(dc, &mut small_chain(), he_init(arch.clone()), &mut b).unwrap();
        assert_same(&a, &b);
        assert_eq!(out.episode_returns, returns);
    }
}
