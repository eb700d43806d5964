//! Experiment driver plumbing: configuration text, metrics and summary
//! files, run comparison, and the TCP worker loop.

mod config;
mod metrics;
mod run;
mod summary;

pub use config::{experiment_text, parse_config, RunConfig, Transport};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter, METRICS_HEADER};
pub use run::{run, run_client, RunOutcome, JOIN_TIMEOUT};
pub use summary::{
    build_id, compare, render_comparison, summarize, summarize_groups, write_summary, ComparisonRow, RunManifest,
    StrategySummary, Summary, TARGET_FRACTION,
};
