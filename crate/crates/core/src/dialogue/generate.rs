use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::{
    parse_turns, validate_dialogue, DialoguePrompt, DialogueRecord, Speaker, ValidationFailure, ValidationReport,
    IMAGE_TOKEN,
};
use crate::endpoint::{complete_with_retry, ChatEndpoint, ChatMessage, DecodingParams, EndpointError, RetryPolicy};
use crate::labels::ExamLabels;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Regeneration budget after a validation failure.
    pub retries: u32,
    /// Backoff for transport failures within one attempt.
    #[serde(default)]
    pub transport: RetryPolicy,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: DecodingParams::GENERATION.temperature,
            max_tokens: DecodingParams::GENERATION.max_tokens,
            retries: 3,
            transport: RetryPolicy::default(),
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if !(self.temperature >= 0.0) || self.max_tokens == 0 {
            return Err(GenerationError::InvalidParams(format!(
                "temperature {} must be >= 0 and max_tokens {} > 0",
                self.temperature, self.max_tokens
            )));
        }
        Ok(())
    }

    fn decoding(&self) -> DecodingParams {
        DecodingParams { temperature: self.temperature, max_tokens: self.max_tokens }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("case {case_ref}: {source}")]
    Endpoint {
        case_ref: String,
        #[source]
        source: EndpointError,
    },
}

fn record_from_text(prompt: &DialoguePrompt, labels: &ExamLabels, raw: String, attempts: u32) -> DialogueRecord {
    let (turns, validation) = match parse_turns(&raw) {
        Ok(mut turns) => {
            if let Some(first) = turns.first_mut() {
                if first.speaker == Speaker::Human && !first.text.starts_with(IMAGE_TOKEN) {
                    first.text = format!("{IMAGE_TOKEN}{}", first.text);
                }
            }
            let report = validate_dialogue(prompt.mode, &turns, labels);
            (turns, report)
        }
        Err(_) => (Vec::new(), ValidationReport::from_failures(vec![ValidationFailure::Format])),
    };
    DialogueRecord { case_ref: prompt.case_ref.clone(), mode: prompt.mode, turns, validation, attempts, raw_text: Some(raw) }
}

/// Generates one dialogue, regenerating on validation failure up to
/// `params.retries` times. The last attempt is returned flagged when none pass.
pub async fn generate_dialogue(
    prompt: &DialoguePrompt,
    labels: &ExamLabels,
    endpoint: &dyn ChatEndpoint,
    params: &GenerationParams,
) -> Result<DialogueRecord, GenerationError> {
    params.validate()?;
    let messages = [ChatMessage::user(prompt.text.clone())];
    let mut attempt = 0;
    loop {
        attempt += 1;
        let (result, _) = complete_with_retry(endpoint, &messages, &params.decoding(), &params.transport).await;
        let raw = result.map_err(|source| GenerationError::Endpoint { case_ref: prompt.case_ref.clone(), source })?;
        let record = record_from_text(prompt, labels, raw, attempt);
        if record.validation.valid || attempt > params.retries {
            return Ok(record);
        }
        tracing::debug!(case = %prompt.case_ref, attempt, failures = ?record.validation.failures, "regenerating");
    }
}

/// Generates dialogues with at most `concurrency` requests in flight.
/// Results come back in input order.
pub async fn generate_batch(
    jobs: Vec<(DialoguePrompt, ExamLabels)>,
    endpoint: Arc<dyn ChatEndpoint>,
    params: GenerationParams,
    concurrency: usize,
) -> Vec<Result<DialogueRecord, GenerationError>> {
    stream::iter(jobs)
        .map(|(prompt, labels)| {
            let endpoint = Arc::clone(&endpoint);
            async move { generate_dialogue(&prompt, &labels, endpoint.as_ref(), &params).await }
        })
        .buffered(concurrency.max(1))
        .collect()
        .await
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use async_trait::async_trait;

    use super::*;
    use crate::dialogue::fixtures::JSON_EXAMPLE;
    use crate::dialogue::DialogueMode;

    struct Scripted {
        replies: Vec<String>,
        calls: AtomicUsize,
    }

    #[async_trait]
    impl ChatEndpoint for Scripted {
        async fn complete(&self, _: &[ChatMessage], _: &DecodingParams) -> Result<String, EndpointError> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.replies[i.min(self.replies.len() - 1)].clone())
        }
    }

    fn prompt() -> DialoguePrompt {
        DialoguePrompt { mode: DialogueMode::Json, text: "p".into(), case_ref: "IMG1".into() }
    }

    const TRUTH: ExamLabels = ExamLabels { advamd: 0, pig: 0, drus: 1 };

    #[tokio::test]
    async fn stored_example_passes_first_time() {
        let ep = Scripted { replies: vec![JSON_EXAMPLE.into()], calls: AtomicUsize::new(0) };
        let rec = generate_dialogue(&prompt(), &TRUTH, &ep, &GenerationParams::default()).await.unwrap();
        assert!(rec.validation.valid);
        assert_eq!(rec.turns.len(), 6);
        assert_eq!(rec.attempts, 1);
    }

    #[tokio::test]
    async fn invalid_output_is_retried_then_flagged() {
        let two_pairs = r#"[{"role":"human","text":"Q"},{"role":"gpt","text":"{\"DRUS\": 1}"},{"role":"human","text":"Q"},{"role":"gpt","text":"{\"PIG\": 0}"}]"#;
        let ep = Scripted { replies: vec![two_pairs.into()], calls: AtomicUsize::new(0) };
        let rec = generate_dialogue(&prompt(), &TRUTH, &ep, &GenerationParams::default()).await.unwrap();
        assert!(!rec.validation.valid);
        assert!(rec.validation.has(ValidationFailure::TurnCount));
        assert_eq!(rec.attempts, 4);
        assert_eq!(ep.calls.load(Ordering::SeqCst), 4);
        assert!(rec.turns[0].text.starts_with(IMAGE_TOKEN));
    }

    #[tokio::test]
    async fn prose_is_format_failure() {
        let ep = Scripted { replies: vec!["I cannot help with that.".into()], calls: AtomicUsize::new(0) };
        let params = GenerationParams { retries: 0, ..Default::default() };
        let rec = generate_dialogue(&prompt(), &TRUTH, &ep, &params).await.unwrap();
        assert_eq!(rec.validation.failures, vec![ValidationFailure::Format]);
    }

    #[tokio::test]
    async fn recovers_on_second_attempt() {
        let ep = Scripted { replies: vec!["nope".into(), JSON_EXAMPLE.into()], calls: AtomicUsize::new(0) };
        let rec = generate_dialogue(&prompt(), &TRUTH, &ep, &GenerationParams::default()).await.unwrap();
        assert!(rec.validation.valid);
        assert_eq!(rec.attempts, 2);
    }
}
