//! Experiment orchestration: configuration, the system variants, sweeps,
//! load statistics, the analytic end-to-end estimator and report emission.

mod config;
mod estimate;
mod experiment;
mod report;

pub use config::{
    parse_config, CacheSettings, ConfigError, ExperimentConfig, MappingOverrides, PagePolicy,
    ProfilerSettings, ThresholdMode, TraceSource, Variant,
};
pub use estimate::{end_to_end_speedup, sls_fraction, EstimateError, SLS_FRACTIONS_CSV};
pub use experiment::{
    prepare, rank_load_stats, run_experiment, run_experiment_logged, run_prepared,
    run_prepared_config, run_variants, HarnessError, LoadStats, Prepared, RunArtifacts,
};
pub use report::{emit_report, emit_sweep_csv, sweep_row, ReportFormat, SimReport, SweepRow};
