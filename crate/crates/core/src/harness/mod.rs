//! Experiment orchestration: expert calibration, regime comparisons,
//! sample-reduction reports and the expert-data and rollout sweeps.

mod artifacts;
mod calibrate;
mod compare;
mod config;
mod report;
mod sweep;

pub use artifacts::{load_starting_point, save_starting_point, sidecar_path, CheckpointInfo};
pub use calibrate::{calibrate_expert, expert_mean_return, Calibration, CALIBRATION_WINDOW, MAX_BISECTIONS};
pub use compare::{fresh_start, resolve_quality, run_cell, run_comparison, ActorPretraining};
pub use config::{ExperimentConfig, ExperimentSection, SweepSection};
pub use report::{
    curve_csv, emit_report, median, sample_reduction, CellResult, ComparisonReport, CurvePoint, Reduction, RegimeCurve,
    RegimeSummary, ReportFormat, SeedReduction, REPORT_FORMAT_VERSION,
};
pub use sweep::{
    normalize_return, sweep_expert_steps, sweep_rollout_steps, ExpertSweep, ExpertSweepPoint, RolloutSweep,
    RolloutSweepPoint, SeedReturn, SweepRun,
};
