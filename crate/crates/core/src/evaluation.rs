//! Joins prediction sets with ground truth and feeds the stat engine.

use std::collections::{BTreeMap, BTreeSet};

use crate::cohort::CohortManifest;
use crate::inference::Prediction;
use crate::labels::{ExamLabels, Task};
use crate::stats::{compare_models, task_metrics, BootstrapConfig, ComparisonResult, StatsError, TaskMetrics, TaskOutcomes};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("prediction set is empty")]
    Empty,
    #[error("prediction set mixes models {0:?}")]
    MixedModels(Vec<String>),
    #[error("prediction set for `{model}` mixes prompt digests")]
    MixedPrompts { model: String },
    #[error("models `{a}` and `{b}` were run with different prompts")]
    PromptMismatch { a: String, b: String },
    #[error("prediction for `{0}` has no ground truth")]
    UnknownCase(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub type Truth = BTreeMap<String, ExamLabels>;

pub fn truth_from_manifest(manifest: &CohortManifest) -> Truth {
    manifest.records().iter().map(|r| (r.image_id.clone(), r.labels)).collect()
}

/// The model id and prompt digest shared by every prediction in the set.
pub fn set_identity(preds: &[Prediction]) -> Result<(String, String), EvalError> {
    let first = preds.first().ok_or(EvalError::Empty)?;
    let models: BTreeSet<&str> = preds.iter().map(|p| p.model_id.as_str()).collect();
    if models.len() > 1 {
        return Err(EvalError::MixedModels(models.into_iter().map(String::from).collect()));
    }
    if preds.iter().any(|p| p.prompt_digest != first.prompt_digest) {
        return Err(EvalError::MixedPrompts { model: first.model_id.clone() });
    }
    Ok((first.model_id.clone(), first.prompt_digest.clone()))
}

/// Outcomes for one task over exactly the predicted cases.
pub fn outcomes_for(task: Task, preds: &[Prediction], truth: &Truth) -> Result<TaskOutcomes, EvalError> {
    let mut task_truth = BTreeMap::new();
    for p in preds {
        let labels = truth.get(&p.image_id).ok_or_else(|| EvalError::UnknownCase(p.image_id.clone()))?;
        task_truth.insert(p.image_id.clone(), labels.get(task));
    }
    let pairs = preds.iter().map(|p| (p.image_id.clone(), p.parsed.and_then(|l| l.get(task))));
    Ok(TaskOutcomes::align(task, pairs, &task_truth)?)
}

pub fn score_predictions(
    preds: &[Prediction],
    truth: &Truth,
    tasks: &[Task],
    cfg: &BootstrapConfig,
) -> Result<Vec<TaskMetrics>, EvalError> {
    let (model, _) = set_identity(preds)?;
    tasks
        .iter()
        .map(|t| Ok(task_metrics(&model, &outcomes_for(*t, preds, truth)?, cfg)?))
        .collect()
}

/// Paired comparison of two prediction sets. Both must come from the same prompt.
pub fn compare_predictions(
    a: &[Prediction],
    b: &[Prediction],
    truth: &Truth,
    tasks: &[Task],
    cfg: &BootstrapConfig,
) -> Result<Vec<ComparisonResult>, EvalError> {
    let (model_a, digest_a) = set_identity(a)?;
    let (model_b, digest_b) = set_identity(b)?;
    if digest_a != digest_b {
        return Err(EvalError::PromptMismatch { a: model_a, b: model_b });
    }
    tasks
        .iter()
        .map(|t| {
            let oa = outcomes_for(*t, a, truth)?;
            let ob = outcomes_for(*t, b, truth)?;
            Ok(compare_models(&model_a, &oa, &model_b, &ob, cfg)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::PromptKind;
    use crate::labels::PartialLabels;

    fn pred(id: &str, model: &str, digest: &str, drus: Option<u8>) -> Prediction {
        Prediction {
            image_id: id.into(),
            model_id: model.into(),
            prompt_kind: PromptKind::Closed,
            task_hint: None,
            prompt_digest: digest.into(),
            raw_text: String::new(),
            parsed: drus.map(|d| PartialLabels { drus: Some(d), ..Default::default() }),
            parse_error: None,
            source_span: None,
            latency_ms: 0,
            attempt: 1,
        }
    }

    fn truth() -> Truth {
        (0..4).map(|i| (format!("I{i}"), ExamLabels { advamd: 0, pig: 0, drus: (i % 3) as u8 })).collect()
    }

    #[test]
    fn prompt_digests_must_match() {
        let a: Vec<_> = (0..4).map(|i| pred(&format!("I{i}"), "a", "d1", Some(0))).collect();
        let b: Vec<_> = (0..4).map(|i| pred(&format!("I{i}"), "b", "d2", Some(0))).collect();
        let cfg = BootstrapConfig::new(1).with_resamples(50);
        assert!(matches!(compare_predictions(&a, &b, &truth(), &[Task::Drus], &cfg), Err(EvalError::PromptMismatch { .. })));
        let b: Vec<_> = (0..4).map(|i| pred(&format!("I{i}"), "b", "d1", None)).collect();
        let r = compare_predictions(&a, &b, &truth(), &[Task::Drus], &cfg).unwrap();
        assert_eq!(r[0].discordant.b, 2);
        assert_eq!(r[0].discordant.c, 0);
    }

    #[test]
    fn mixed_sets_are_rejected() {
        let mut a: Vec<_> = (0..4).map(|i| pred(&format!("I{i}"), "a", "d1", Some(0))).collect();
        a[1].model_id = "z".into();
        assert!(matches!(set_identity(&a), Err(EvalError::MixedModels(_))));
        a[1].model_id = "a".into();
        a[2].prompt_digest = "other".into();
        assert!(matches!(set_identity(&a), Err(EvalError::MixedPrompts { .. })));
    }

    #[test]
    fn missing_key_is_sentinel() {
        let a = vec![pred("I1", "a", "d", None)];
        let o = outcomes_for(Task::Drus, &a, &truth()).unwrap();
        assert_eq!(o.predicted, vec![None]);
        assert!(matches!(outcomes_for(Task::Drus, &[pred("X", "a", "d", None)], &truth()), Err(EvalError::UnknownCase(_))));
    }
}
