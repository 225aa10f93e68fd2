mod common;

use common::*;
use iqn::approximator::{MlpArchitecture, MlpParams, QFunction};
use iqn::chain::{run_idqn, run_ifqi, EpsilonSchedule, IdqnConfig, IfqiConfig};
use iqn::diagnostics::{prop2_equivalence_check, table1_metrics, BackupModel, DiagnosticsEngine, DiagnosticsRecord};
use iqn::envs::{TabularMdp, Transition};
use iqn::rng::{stream, Stream};
use iqn::IqnError;

fn check_soundness(records: &[DiagnosticsRecord]) {
    for r in records {
        let o = &r.outcome;
        if o.all_eq5() {
            assert!(o.eq6, "snapshot {}: displacement condition holds for all k but CSAE {} → {}", r.snapshot, o.csae_t, o.csae_t1);
        }
        assert_eq!(o.csae_t.to_bits(), o.errors_t.iter().sum::<f64>().to_bits());
        assert_eq!(o.csae_t1.to_bits(), o.errors_t1.iter().sum::<f64>().to_bits());
        assert!(o.errors_t.iter().chain(&o.before).chain(&o.cross).chain(&o.displacement).all(|&x| x >= 0.0));
    }
}

#[test]
fn sufficient_condition_implies_decrease_in_ifqi() {
    let data = car_dataset(2_000, 8);
    let pairs: Vec<_> = data.iter().step_by(10).cloned().collect();
    for k in [1, 3, 6] {
        let config = IfqiConfig {
            k,
            n_iterations: 12,
            gradient_budget: 400,
            batch_size: 50,
            rolling_period: 1,
            gamma: 0.95,
            adam: adam(2e-3),
            parallel: false,
            seed: k as u64,
        };
        let mut engine = DiagnosticsEngine::new(&pairs, &data, 0.95, 1).unwrap();
        run_ifqi(config, &data, he_init(car_mlp()), &mut engine).unwrap();
        assert!(engine.records.len() > 300);
        check_soundness(&engine.records);
        assert_eq!(engine.iterates.len(), 12);
        let m = table1_metrics(&engine.records).unwrap();
        assert_eq!(m.pct_eq6_given_eq5.unwrap_or(100.0), 100.0);
        if k == 1 {
            assert_eq!(m.decrease_share_eq5, Some(100.0));
        }
    }
}

#[test]
fn sufficient_condition_implies_decrease_in_idqn() {
    let arch = MlpArchitecture::new(6, vec![16], 2).unwrap();
    let config = IdqnConfig {
        k: 3,
        total_steps: 600,
        gradient_period: 1,
        shift_period: 60,
        rolling_period: 5,
        batch_size: 16,
        buffer_capacity: 1_000,
        learning_starts: 50,
        epsilon: EpsilonSchedule::constant(0.3),
        gamma: 0.9,
        adam: adam(3e-3),
        parallel: false,
        seed: 4,
    };
    // ν for the pair checks: a fixed uniform sample of the chain.
    let data = chain_dataset(300, 4);
    let mut engine = DiagnosticsEngine::new(&data, &data, 0.9, 1).unwrap();
    run_idqn(config, small_chain(), he_init(arch), &mut engine).unwrap();
    assert!(engine.records.len() > 50);
    check_soundness(&engine.records);
}

fn probes(arch: &MlpArchitecture, seed: u64) -> Vec<MlpParams> {
    let mut rng = stream(seed, Stream::Probe);
    (0..10).map(|_| MlpParams::he_uniform(arch.clone(), &mut rng)).collect()
}

#[test]
fn loss_and_distance_differ_by_a_constant_on_deterministic_data() {
    let mut data = car_dataset(500, 1);
    // Duplicates of deterministic samples keep the identity.
    let copies: Vec<Transition> = data.iter().step_by(3).cloned().collect();
    data.extend(copies);
    let target = MlpParams::he_uniform(car_mlp(), &mut stream(1, Stream::Init));
    let out = prop2_equivalence_check(&target, &data, 0.95, BackupModel::Deterministic, &probes(&car_mlp(), 1)).unwrap();
    assert!(out.spread <= 1e-8 * out.scale, "spread {} at scale {}", out.spread, out.scale);
}

/// Two states, two actions; every pair moves to either state with
/// probability ½ and pays `R[s][a]`.
fn coin_mdp() -> TabularMdp {
    let p = vec![vec![vec![0.5, 0.5]; 2]; 2];
    TabularMdp::from_dense(p, vec![vec![0.0, 1.0], vec![-0.5, 0.25]], 0.9).unwrap()
}

fn one_hot(s: usize) -> Vec<f64> {
    let mut v = vec![0.0; 2];
    v[s] = 1.0;
    v
}

/// Each state-action pair appears `reps` times per successor, so the
/// samples reproduce the transition probabilities exactly.
fn duplicated_dataset(mdp: &TabularMdp, reps: usize, successors: &[usize]) -> Vec<Transition> {
    let mut out = Vec::new();
    for s in 0..2 {
        for a in 0..2 {
            for &next in successors {
                for _ in 0..reps {
                    out.push(Transition {
                        state: one_hot(s),
                        action: a,
                        reward: mdp.reward(s, a),
                        next_state: one_hot(next),
                        terminal: false,
                    });
                }
            }
        }
    }
    out
}

#[test]
fn loss_and_distance_differ_by_a_constant_on_duplicated_stochastic_data() {
    let mdp = coin_mdp();
    let arch = MlpArchitecture::new(2, vec![8], 2).unwrap();
    let target = MlpParams::he_uniform(arch.clone(), &mut stream(3, Stream::Init));
    let expected = |state: &[f64], a: usize| -> iqn::Result<f64> {
        let s = state.iter().position(|&x| x == 1.0).unwrap();
        let mut v = mdp.reward(s, a);
        for &(next, p) in mdp.successors(s, a) {
            v += p * 0.9 * target.max_q(&one_hot(next))?;
        }
        Ok(v)
    };
    let data = duplicated_dataset(&mdp, 3, &[0, 1]);
    let out = prop2_equivalence_check(&target, &data, 0.9, BackupModel::Expected(&expected), &probes(&arch, 3)).unwrap();
    assert!(out.spread <= 1e-8 * out.scale, "spread {} at scale {}", out.spread, out.scale);
    // The constant is the within-pair variance of the backups, not zero.
    assert!(out.differences[0].abs() > 1e-6);

    // Dropping one successor breaks the expectation assumption.
    let skewed = duplicated_dataset(&mdp, 3, &[0]);
    let err = prop2_equivalence_check(&target, &skewed, 0.9, BackupModel::Expected(&expected), &probes(&arch, 3));
    assert!(matches!(err, Err(IqnError::Precondition(_))));
}
