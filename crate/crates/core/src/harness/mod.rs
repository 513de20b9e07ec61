//! Config-driven experiments: synthetic tasks, grid sweeps, reports.

pub mod config;
pub mod report;
pub mod run;
pub mod svg;
pub mod task;

pub use config::{ExperimentConfig, GridCell, RewardId, TaskSpec, TruthFamily};
pub use report::{build_report, report, MetricRow, ReportKind};
pub use run::{run_experiment, ExperimentOutput, RunOptions};
pub use task::{generate_task, Task};
