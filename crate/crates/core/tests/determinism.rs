mod common;

use common::*;
use iqn::approximator::MlpParams;
use iqn::chain::{
    read_chain, run_idqn, run_ifqi, write_chain, EpsilonSchedule, IdqnConfig, IdqnRunner, IfqiConfig, IfqiRunner,
    NoObserver, QChain,
};
use iqn::diagnostics::DiagnosticsEngine;
use iqn::envs::CarOnHill;

fn chain_bits(chain: &QChain<MlpParams>) -> Vec<Vec<u64>> {
    chain.online().iter().chain(chain.targets()).map(bits).collect()
}

fn ifqi_config(k: usize, seed: u64, parallel: bool) -> IfqiConfig {
    IfqiConfig {
        k,
        n_iterations: 12,
        gradient_budget: 200,
        batch_size: 32,
        rolling_period: 3,
        gamma: 0.95,
        adam: adam(3e-3),
        parallel,
        seed,
    }
}

#[test]
fn parallel_ifqi_matches_serial() {
    let data = car_dataset(1_000, 3);
    for k in [2, 5] {
        for seed in 0..3 {
            let serial = run_ifqi(ifqi_config(k, seed, false), &data, he_init(car_mlp()), &mut NoObserver).unwrap();
            let parallel = run_ifqi(ifqi_config(k, seed, true), &data, he_init(car_mlp()), &mut NoObserver).unwrap();
            assert_eq!(chain_bits(&serial), chain_bits(&parallel));
        }
    }
}

#[test]
fn repeated_runs_are_identical() {
    let data = car_dataset(1_000, 4);
    let a = run_ifqi(ifqi_config(3, 9, false), &data, he_init(car_mlp()), &mut NoObserver).unwrap();
    let b = run_ifqi(ifqi_config(3, 9, false), &data, he_init(car_mlp()), &mut NoObserver).unwrap();
    assert_eq!(chain_bits(&a), chain_bits(&b));
}

#[test]
fn ifqi_resumes_bitwise_from_a_checkpoint() {
    let data = car_dataset(1_000, 5);
    let config = ifqi_config(3, 2, false);
    let full = run_ifqi(config, &data, he_init(car_mlp()), &mut NoObserver).unwrap();

    let mut runner = IfqiRunner::new(config, &data, he_init(car_mlp())).unwrap();
    runner.run_until(71, &mut NoObserver).unwrap();
    let mut bytes = Vec::new();
    runner.write_checkpoint(&mut bytes, b"meta").unwrap();
    drop(runner);
    let template = MlpParams::zeros(car_mlp());
    let (resumed, meta) = IfqiRunner::resume(config, &data, &template, &mut bytes.as_slice()).unwrap();
    assert_eq!(meta, b"meta");
    let resumed = resumed.finish(&mut NoObserver).unwrap();
    assert_eq!(chain_bits(&full), chain_bits(&resumed));
}

#[test]
fn diagnostics_survive_a_mid_run_checkpoint() {
    let data = car_dataset(1_000, 6);
    let pairs: Vec<_> = data.iter().step_by(10).cloned().collect();
    let config = ifqi_config(3, 4, false);
    let mut full = DiagnosticsEngine::new(&pairs, &data, 0.95, 2).unwrap();
    run_ifqi(config, &data, he_init(car_mlp()), &mut full).unwrap();
    assert!(!full.records.is_empty());

    // Stop on an odd event so a pair start is pending.
    let mut engine = DiagnosticsEngine::new(&pairs, &data, 0.95, 2).unwrap();
    let mut runner = IfqiRunner::new(config, &data, he_init(car_mlp())).unwrap();
    runner.run_until(71, &mut engine).unwrap();
    let mut bytes = Vec::new();
    runner.write_checkpoint(&mut bytes, b"").unwrap();
    engine.write_state(&mut bytes).unwrap();
    drop((runner, engine));

    let mut reader = bytes.as_slice();
    let (runner, _) = IfqiRunner::resume(config, &data, &MlpParams::zeros(car_mlp()), &mut reader).unwrap();
    let mut engine = DiagnosticsEngine::new(&pairs, &data, 0.95, 2).unwrap();
    engine.read_state(&mut reader).unwrap();
    runner.finish(&mut engine).unwrap();
    assert_eq!(engine.records, full.records);
    assert_eq!(engine.iterates, full.iterates);
}

fn idqn_config(k: usize, seed: u64, parallel: bool) -> IdqnConfig {
    IdqnConfig {
        k,
        total_steps: 400,
        gradient_period: 1,
        shift_period: 40,
        rolling_period: 4,
        batch_size: 16,
        buffer_capacity: 300,
        learning_starts: 32,
        epsilon: EpsilonSchedule { start: 1.0, end: 0.05, decay_steps: 200 },
        gamma: 0.95,
        adam: adam(1e-3),
        parallel,
        seed,
    }
}

#[test]
fn parallel_idqn_matches_serial() {
    for k in [2, 5] {
        for seed in 0..3 {
            let a = run_idqn(idqn_config(k, seed, false), CarOnHill::default(), he_init(car_mlp()), &mut NoObserver)
                .unwrap();
            let b = run_idqn(idqn_config(k, seed, true), CarOnHill::default(), he_init(car_mlp()), &mut NoObserver)
                .unwrap();
            assert_eq!(chain_bits(&a.chain), chain_bits(&b.chain));
            assert_eq!(a.episode_returns, b.episode_returns);
        }
    }
}

#[test]
fn idqn_resumes_bitwise_from_a_checkpoint() {
    let config = idqn_config(3, 6, false);
    let full = run_idqn(config, CarOnHill::default(), he_init(car_mlp()), &mut NoObserver).unwrap();
    let mut runner = IdqnRunner::new(config, CarOnHill::default(), he_init(car_mlp())).unwrap();
    runner.run_until(173, &mut NoObserver).unwrap();
    let mut bytes = Vec::new();
    runner.write_checkpoint(&mut bytes, &[]).unwrap();
    drop(runner);
    let template = MlpParams::zeros(car_mlp());
    let (resumed, _) = IdqnRunner::resume(config, CarOnHill::default(), &template, &mut bytes.as_slice()).unwrap();
    let resumed = resumed.finish(&mut NoObserver).unwrap();
    assert_eq!(chain_bits(&full.chain), chain_bits(&resumed.chain));
    assert_eq!(full.episode_returns, resumed.episode_returns);
}

#[test]
fn chain_checkpoint_survives_a_file() {
    let data = car_dataset(500, 1);
    let chain = run_ifqi(ifqi_config(4, 1, false), &data, he_init(car_mlp()), &mut NoObserver).unwrap();
    let mut file = tempfile::tempfile().unwrap();
    write_chain(&mut file, &chain).unwrap();
    use std::io::{Seek, SeekFrom};
    file.seek(SeekFrom::Start(0)).unwrap();
    let back = read_chain(&mut file, &MlpParams::zeros(car_mlp())).unwrap();
    assert_eq!(chain_bits(&chain), chain_bits(&back));
    assert_eq!(chain.counters(), back.counters());
    assert_eq!(chain.optimizers(), back.optimizers());
}
