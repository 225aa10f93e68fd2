//! Ground truth and measurements.
//!
//! Exact value iteration for tabular MDPs and a discretized car-on-hill,
//! greedy-policy rollouts and the performance loss, approximation errors
//! under `ν` and the per-snapshot sufficient condition for a decreasing error
//! sum, the loss/distance equivalence check, the LQR optimum, and seed
//! aggregation.

mod car;
mod errors;
mod lqr;
mod oracle;
mod prop2;
mod stats;
mod table1;

pub use car::{
    discretized_oracle, greedy_policy_value, performance_loss, policy_value, reference_values, rollout_horizon,
    DiscretizedOracle, Discretization, EvaluationGrid, ORACLE_LOOKAHEAD, ORACLE_RESOLUTION, POSITION_RANGE,
    VELOCITY_RANGE,
};
pub use errors::{
    approximation_error, evaluate_network, evaluate_snapshot, mean_squared_distance, proposition1_check,
    proposition1_from_evaluations, write_diagnostics_csv, write_iterates_csv, DiagnosticsEngine, DiagnosticsRecord,
    IterateRecord, NetworkEvaluation, Prop1Outcome, SnapshotEvaluation,
};
pub use lqr::{bellman_coefficients, lqr_distance, lqr_oracle_qstar, lqr_trajectory_experiment, LqrQ, LqrTrajectory};
pub use oracle::{exact_value_iteration, OracleQ};
pub use prop2::{prop2_equivalence_check, BackupModel, Prop2Outcome};
pub use stats::{bootstrap_ci, iqm};
pub use table1::{table1_metrics, Table1Metrics};
