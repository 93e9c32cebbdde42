//! Metrics, run configuration, reports, and the ablation and sweep drivers.

mod ablate;
mod config;
mod experiment;
mod metrics;
mod report;
mod sweep;

pub use ablate::{run_ablation, AblationReport, AblationRun, BudgetComparison, Spread, VariantSummary};
pub use config::{config_hash, parse_grid, ModelSettings, Overrides, RunConfig};
pub use experiment::{
    evaluate_model, labels_of, prepare_data, prepare_data_for, run_experiment, PreparedData, RunOutcome, RunReports,
};
pub use metrics::{min_recall_precision, pr_auc, roc_auc, scored, ScoredExample};
pub use report::{emit_report, MetricReport, VERSION};
pub use sweep::{run_sweep, SweepRow};
