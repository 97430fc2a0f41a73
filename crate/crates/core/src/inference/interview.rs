//! Scripted multi-turn open-ended sessions, one per (case, model).

use std::sync::Arc;

use futures::stream::{self, StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};

use super::prompts::{build_inference_prompt, PromptKind, TaskHint, OPEN_SYSTEM};
use super::{InferenceCase, InferenceError, PredictionError, RunOptions};
use crate::dialogue::Turn;
use crate::endpoint::{complete_with_retry, image_part, ChatEndpoint, ChatMessage, EndpointError};
use crate::provenance::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterviewRecord {
    pub image_id: String,
    pub model_id: String,
    /// Digest of the system text and the question script.
    pub script_digest: String,
    pub turns: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<PredictionError>,
}

fn case_seed(seed: u64, image_id: &str, hint: TaskHint) -> u64 {
    let digest = sha256_hex(format!("{seed}\0{image_id}\0{hint}"));
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

/// One question per hint, in hint order. Depends on the seed and the case only,
/// so every model sees the same script for a case.
pub fn interview_script(seed: u64, image_id: &str) -> Vec<String> {
    TaskHint::ALL
        .iter()
        .map(|h| {
            build_inference_prompt(PromptKind::Open, Some(*h), case_seed(seed, image_id, *h))
                .expect("open prompt with hint")
                .text
        })
        .collect()
}

fn script_digest(script: &[String]) -> String {
    let mut buf = OPEN_SYSTEM.to_string();
    for q in script {
        buf.push('\0');
        buf.push_str(q);
    }
    sha256_hex(buf)
}

async fn interview_one(
    case: &InferenceCase,
    endpoint: &dyn ChatEndpoint,
    model_id: &str,
    seed: u64,
    opts: &RunOptions,
) -> Result<InterviewRecord, InferenceError> {
    let image = image_part(&case.image_path).map_err(|source| InferenceError::Image {
        image_id: case.image_id.clone(),
        path: case.image_path.clone(),
        source,
    })?;
    let script = interview_script(seed, &case.image_id);
    let mut record = InterviewRecord {
        image_id: case.image_id.clone(),
        model_id: model_id.to_string(),
        script_digest: script_digest(&script),
        turns: Vec::new(),
        error: None,
    };
    let mut messages = vec![ChatMessage::system(OPEN_SYSTEM)];
    for (i, question) in script.into_iter().enumerate() {
        messages.push(if i == 0 {
            ChatMessage::user_with_image(image.clone(), question.clone())
        } else {
            ChatMessage::user(question.clone())
        });
        let (result, _) = complete_with_retry(endpoint, &messages, &opts.decoding, &opts.retry).await;
        match result {
            Ok(reply) => {
                record.turns.push(Turn::human(question));
                record.turns.push(Turn::gpt(reply.clone()));
                messages.push(ChatMessage::assistant(reply));
            }
            Err(EndpointError::Auth(message)) => {
                return Err(InferenceError::Auth { model_id: model_id.to_string(), message });
            }
            Err(e) => {
                tracing::warn!(image = %case.image_id, error = %e, "interview interrupted");
                record.error = Some(PredictionError::Transport);
                break;
            }
        }
    }
    Ok(record)
}

/// Interviews every case, in case order.
pub async fn run_interviews(
    cases: &[InferenceCase],
    endpoint: Arc<dyn ChatEndpoint>,
    model_id: &str,
    seed: u64,
    opts: &RunOptions,
) -> Result<Vec<InterviewRecord>, InferenceError> {
    stream::iter(cases)
        .map(|case| {
            let endpoint = Arc::clone(&endpoint);
            async move { interview_one(case, endpoint.as_ref(), model_id, seed, opts).await }
        })
        .buffered(opts.concurrency.max(1))
        .try_collect()
        .await
}

#[cfg(test)]
mod tests {
    use async_trait::async_trait;

    use super::*;
    use crate::endpoint::{DecodingParams, RetryPolicy};

    struct Counter;

    #[async_trait]
    impl ChatEndpoint for Counter {
        async fn complete(&self, messages: &[ChatMessage], _: &DecodingParams) -> Result<String, EndpointError> {
            Ok(format!("reply to {} messages", messages.len()))
        }
    }

    #[test]
    fn script_is_case_seeded() {
        let a = interview_script(3, "IMG1");
        assert_eq!(a.len(), 5);
        assert_eq!(a, interview_script(3, "IMG1"));
        assert!(crate::inference::ADVAMD_QUESTIONS.contains(&a[0].as_str()));
        assert!(crate::inference::ADDITIONAL_QUESTIONS.contains(&a[4].as_str()));
    }

    #[tokio::test]
    async fn history_accumulates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        std::fs::write(&path, b"png").unwrap();
        let cases = [InferenceCase { image_id: "IMG1".into(), image_path: path }];
        let opts = RunOptions { concurrency: 1, retry: RetryPolicy::immediate(0), decoding: DecodingParams::OPEN };
        let out = run_interviews(&cases, Arc::new(Counter), "m", 1, &opts).await.unwrap();
        assert_eq!(out[0].turns.len(), 10);
        assert_eq!(out[0].turns[1].text, "reply to 2 messages");
        assert_eq!(out[0].turns[9].text, "reply to 10 messages");
    }
}
