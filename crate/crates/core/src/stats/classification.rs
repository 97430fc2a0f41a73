//! Case-level scoring of one task: accuracy and F1.
//!
//! A missing prediction (parse failure or absent key) is a sentinel class: it
//! is never correct and only ever adds false negatives.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::exact::{clopper_pearson, Interval};
use super::StatsError;
use crate::labels::Task;

/// Truth and prediction per case for one task, aligned and sorted by image id.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcomes {
    pub task: Task,
    pub image_ids: Vec<String>,
    pub truth: Vec<u8>,
    pub predicted: Vec<Option<u8>>,
}

impl TaskOutcomes {
    /// Aligns predictions with truth. Both sides must cover exactly the same ids.
    pub fn align<I, S>(task: Task, predictions: I, truth: &BTreeMap<String, u8>) -> Result<Self, StatsError>
    where
        I: IntoIterator<Item = (S, Option<u8>)>,
        S: Into<String>,
    {
        let mut by_id: BTreeMap<String, Option<u8>> = BTreeMap::new();
        for (id, pred) in predictions {
            let id = id.into();
            if by_id.insert(id.clone(), pred).is_some() {
                return Err(StatsError::Misaligned(format!("duplicate prediction for `{id}`")));
            }
        }
        if let Some(extra) = by_id.keys().find(|id| !truth.contains_key(*id)) {
            return Err(StatsError::Misaligned(format!("prediction for unknown case `{extra}`")));
        }
        if let Some(missing) = truth.keys().find(|id| !by_id.contains_key(*id)) {
            return Err(StatsError::Misaligned(format!("no prediction for case `{missing}`")));
        }
        let mut out = TaskOutcomes { task, image_ids: Vec::new(), truth: Vec::new(), predicted: Vec::new() };
        for (id, pred) in by_id {
            out.truth.push(truth[&id]);
            out.predicted.push(pred.filter(|v| task.contains(*v)));
            out.image_ids.push(id);
        }
        Ok(out)
    }

    /// Builds outcomes directly from parallel vectors (ids are generated).
    pub fn from_vectors(task: Task, truth: Vec<u8>, predicted: Vec<Option<u8>>) -> Result<Self, StatsError> {
        if truth.len() != predicted.len() {
            return Err(StatsError::Misaligned(format!("{} truths vs {} predictions", truth.len(), predicted.len())));
        }
        let image_ids = (0..truth.len()).map(|i| format!("case-{i:06}")).collect();
        Ok(TaskOutcomes { task, image_ids, truth, predicted })
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn correct(&self) -> Vec<bool> {
        self.truth.iter().zip(&self.predicted).map(|(t, p)| *p == Some(*t)).collect()
    }

    /// Checks that `other` scores the same cases against the same truth.
    pub fn ensure_paired(&self, other: &TaskOutcomes) -> Result<(), StatsError> {
        if self.task != other.task || self.image_ids != other.image_ids || self.truth != other.truth {
            return Err(StatsError::Misaligned("outcome sets cover different cases or tasks".into()));
        }
        Ok(())
    }
}

pub(crate) fn accuracy_on(truth: &[u8], predicted: &[Option<u8>], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let k = idx.iter().filter(|&&i| predicted[i] == Some(truth[i])).count();
    k as f64 / idx.len() as f64
}

/// Accuracy `k / n` with an exact Clopper-Pearson interval.
pub fn accuracy_with_ci(outcomes: &TaskOutcomes, alpha: f64) -> Result<(f64, Interval), StatsError> {
    if outcomes.is_empty() {
        return Err(StatsError::Empty);
    }
    let k = outcomes.correct().iter().filter(|c| **c).count() as u64;
    let n = outcomes.len() as u64;
    Ok((k as f64 / n as f64, clopper_pearson(k, n, alpha)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Averaging {
    /// F1 of class 1 (binary tasks).
    PositiveClass,
    /// Unweighted mean of per-class F1 (drusen size).
    Macro,
}

impl F1Averaging {
    pub fn for_task(task: Task) -> Self {
        if task.is_binary() {
            F1Averaging::PositiveClass
        } else {
            F1Averaging::Macro
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class: u8,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub task: Task,
    pub averaging: F1Averaging,
    pub f1: f64,
    pub per_class: Vec<ClassStats>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_stats(class: u8, truth: &[u8], predicted: &[Option<u8>], idx: &[usize]) -> ClassStats {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for &i in idx {
        let t = truth[i] == class;
        let p = predicted[i] == Some(class);
        match (t, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    ClassStats { class, precision, recall, f1, support: tp + fn_ }
}

pub(crate) fn f1_on(task: Task, truth: &[u8], predicted: &[Option<u8>], idx: &[usize]) -> f64 {
    match F1Averaging::for_task(task) {
        F1Averaging::PositiveClass => class_stats(1, truth, predicted, idx).f1,
        F1Averaging::Macro => {
            let k = task.num_classes();
            (0..k).map(|c| class_stats(c, truth, predicted, idx).f1).sum::<f64>() / k as f64
        }
    }
}

pub fn f1_report(outcomes: &TaskOutcomes) -> Result<F1Report, StatsError> {
    if outcomes.is_empty() {
        return Err(StatsError::Empty);
    }
    let idx: Vec<usize> = (0..outcomes.len()).collect();
    let per_class = outcomes
        .task
        .classes()
        .map(|c| class_stats(c, &outcomes.truth, &outcomes.predicted, &idx))
        .collect();
    Ok(F1Report {
        task: outcomes.task,
        averaging: F1Averaging::for_task(outcomes.task),
        f1: f1_on(outcomes.task, &outcomes.truth, &outcomes.predicted, &idx),
        per_class,
    })
}

/// Distinct predicted values, including the sentinel, for diagnostics.
pub fn predicted_classes(outcomes: &TaskOutcomes) -> HashSet<Option<u8>> {
    outcomes.predicted.iter().copied().collect()
}
