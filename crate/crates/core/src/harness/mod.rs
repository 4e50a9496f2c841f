//! Experiment orchestration: configuration, output layout, training runs
//! with per-round evaluation, the kernel variance study and SNPE vs SMC-ABC
//! comparisons.

mod compare;
mod config;
mod layout;
mod train;
mod variance;

pub use compare::{cmd_compare, CompareRow, COMPARE_HEADER};
pub use config::{ExperimentConfig, MetricKind};
pub use layout::OutputLayout;
pub use train::{cmd_metrics, cmd_reference, cmd_train, evaluate_round, TrainOutcome};
pub use variance::{cmd_variance_check, variance_study, VarianceReport, VarianceRow, DEFAULT_TAUS};
