//! Run configuration, the training pipeline and the experiment grid with
//! its report files.

mod config;
mod grid;
mod pipeline;
mod report;

pub use config::{RunConfig, ServeConfig};
pub use grid::{
    combinations, enumerate, peak_rss_kib, run_experiment_grid, run_one, Experiment, ExperimentRecord, GridOutput,
    ResourceRecord, SplitData,
};
pub use pipeline::{run_pipeline, PipelineOutcome};
pub use report::{cdf_auc, cdf_series, summarize, write_report, ExperimentReport, HeadSummary};
