//! Experiment driver: runs a workload against a collection policy, enforces
//! the memory threshold, feeds epoch rewards back to learners, and compares
//! variants against the baseline.

mod compare;
mod config;
mod output;
mod run;

pub use compare::{
    compare_variants, median_improvement, ComparisonCell, ComparisonTable, SeedImprovement,
};
pub use config::{ExperimentConfig, MatrixSpec, MemorySettings, Threshold, Variant};
pub use output::{write_comparison_csv, write_detail_csv, write_epoch_csv, write_summary_json};
pub use run::{
    calibrate_threshold, calibrate_threshold_with, median, median_u64, policy_for,
    resolve_threshold, run, simulate, verify_trace, CollectionPolicy, DecisionContext, EpochRecord,
    NeverCollect, OverlapStats, RunError, RunResult, TraceEvent, UniformRandom,
};
