//! Detection metrics, the misclassification and OOD tasks, the amortization
//! gap diagnostic, and the one-pass vs Monte Carlo timing harness.

mod gap;
mod metrics;
mod report;
mod tasks;
mod timing;

use crate::losses::LossError;
use crate::student::StudentError;
use crate::teachers::TeacherError;

pub use gap::{amortization_gap, gap_against, GapConfig, GapReport};
pub use metrics::{aupr, auroc, ScoredExample};
pub use report::{format_table, read_metrics, write_metrics, MetricsRecord};
pub use tasks::{misc_task, ood_task, Scorer};
pub use timing::{timing_harness, TimingReport, TIMING_REPETITIONS};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("need both classes: {positives} positives, {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },
    #[error("no positive examples")]
    NoPositives,
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("{task}: {source}")]
    Task { task: String, source: Box<EvalError> },
    #[error("invalid evaluation input: {0}")]
    Config(String),
    #[error(transparent)]
    Student(#[from] StudentError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
