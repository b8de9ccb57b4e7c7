//! Fairness and performance measurement on classifier outputs.

pub mod metrics;
mod probe;
mod report;

pub use metrics::{accuracy, auc, statistical_parity, tpr, Parity};
pub use probe::{train_classifier, train_probe, train_probe_split, ClassifierConfig, ProbeResult};
pub use report::{aggregate, build_report, render_parity_table, ClassMetrics, EvalReport, Overall, ProbeSummary, Weighting};
