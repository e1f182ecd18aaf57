//! Experiment orchestration: sweep configuration, parallel runs, logs and reports.

mod config;
mod report;
mod run;

pub use config::{ExperimentKind, RunConfig};
pub use report::{curve_svg, emit_reports, load_summaries, metrics_csv, morph_table, summary_csv};
pub use run::{
    network_architecture, prepare_tasks, run_experiment, run_single, run_stem, run_sweep, task_performance, write_jsonl,
    PreparedTasks, RunOutcome, RunSummary, SweepArtifact, DATA_ENV,
};
