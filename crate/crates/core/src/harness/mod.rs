//! Reference oracles, metric emission and preset verification.

mod metrics;
mod oracle;
mod verify;

pub use metrics::{emit_metrics, parse_metrics_csv, MetricsFormat, MetricsRow, CSV_HEADER};
pub use oracle::{
    oracle_mc_return, oracle_objective, oracle_policy_evaluation, oracle_value_iteration,
    oracle_value_iteration_with, point_mass_policy, McEstimate, OracleResult, SweepMode, ORACLE_MAX_SWEEPS,
};
pub use verify::{
    compare_presets, criteria_for, final_policy, manifest, summarize, verify_preset, Check, CheckKind,
    CheckOutcome, PresetCriteria, RunSummary, VerifyReport, ORACLE_TOL,
};
