//! Accuracy, F1, confidence intervals and paired significance tests.

mod bootstrap;
mod classification;
mod exact;
mod report;

use serde::{Deserialize, Serialize};

use crate::labels::Task;

pub use bootstrap::{
    bootstrap_ci, bootstrap_distribution, nearest_rank, paired_bootstrap_p, percentile_interval,
    resample_indices, BootstrapConfig, BootstrapPValue,
};
pub use classification::{
    accuracy_with_ci, f1_report, predicted_classes, ClassStats, F1Averaging, F1Report, TaskOutcomes,
};
pub use exact::{beta_quantile, binomial_half_cdf, clopper_pearson, mcnemar_exact_p, Discordant, Interval};
pub use report::{write_comparisons_csv, write_metrics_csv, COMPARISON_COLUMNS, METRIC_COLUMNS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("no cases to score")]
    Empty,
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// Which case-level metric a bootstrap procedure resamples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    F1,
}

impl Metric {
    /// Evaluates the metric on a resample of `outcomes`.
    pub fn on(self, outcomes: &TaskOutcomes, idx: &[usize]) -> f64 {
        match self {
            Metric::Accuracy => classification::accuracy_on(&outcomes.truth, &outcomes.predicted, idx),
            Metric::F1 => classification::f1_on(outcomes.task, &outcomes.truth, &outcomes.predicted, idx),
        }
    }
}

/// Per-task accuracy and F1 for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub model_id: String,
    pub task: Task,
    pub n: usize,
    pub accuracy: f64,
    /// Clopper-Pearson exact interval.
    pub acc_ci: Interval,
    /// Percentile bootstrap interval of accuracy, reported alongside.
    pub acc_bootstrap_ci: Interval,
    pub f1: f64,
    /// Percentile bootstrap interval of F1.
    pub f1_ci: Interval,
    pub averaging: F1Averaging,
    pub per_class: Vec<ClassStats>,
}

pub fn task_metrics(
    model_id: &str,
    outcomes: &TaskOutcomes,
    cfg: &BootstrapConfig,
) -> Result<TaskMetrics, StatsError> {
    let (accuracy, acc_ci) = accuracy_with_ci(outcomes, cfg.alpha)?;
    let f1 = f1_report(outcomes)?;
    let acc_bootstrap_ci = bootstrap_ci(outcomes.len(), cfg, |idx| Metric::Accuracy.on(outcomes, idx))?;
    let f1_ci = bootstrap_ci(outcomes.len(), cfg, |idx| Metric::F1.on(outcomes, idx))?;
    Ok(TaskMetrics {
        model_id: model_id.to_string(),
        task: outcomes.task,
        n: outcomes.len(),
        accuracy,
        acc_ci,
        acc_bootstrap_ci,
        f1: f1.f1,
        f1_ci,
        averaging: f1.averaging,
        per_class: f1.per_class,
    })
}

/// Paired bootstrap test of `metric(a) - metric(b)`.
pub fn paired_bootstrap_test(
    metric: Metric,
    a: &TaskOutcomes,
    b: &TaskOutcomes,
    cfg: &BootstrapConfig,
) -> Result<BootstrapPValue, StatsError> {
    a.ensure_paired(b)?;
    paired_bootstrap_p(a.len(), cfg, |idx| metric.on(a, idx) - metric.on(b, idx))
}

/// Exact McNemar p-value of two outcome sets on the same cases.
pub fn mcnemar_exact(a: &TaskOutcomes, b: &TaskOutcomes) -> Result<(Discordant, f64), StatsError> {
    a.ensure_paired(b)?;
    let d = Discordant::from_correctness(&a.correct(), &b.correct())?;
    Ok((d, mcnemar_exact_p(d)))
}

/// Paired comparison of two models on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub task: Task,
    pub model_a: String,
    pub model_b: String,
    pub discordant: Discordant,
    pub p_accuracy: f64,
    pub p_f1: BootstrapPValue,
}

pub fn compare_models(
    model_a: &str,
    a: &TaskOutcomes,
    model_b: &str,
    b: &TaskOutcomes,
    cfg: &BootstrapConfig,
) -> Result<ComparisonResult, StatsError> {
    let (discordant, p_accuracy) = mcnemar_exact(a, b)?;
    let p_f1 = paired_bootstrap_test(Metric::F1, a, b, cfg)?;
    Ok(ComparisonResult {
        task: a.task,
        model_a: model_a.to_string(),
        model_b: model_b.to_string(),
        discordant,
        p_accuracy,
        p_f1,
    })
}
