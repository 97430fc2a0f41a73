//! Evaluation prompts and batch inference against model endpoints.

mod interview;
mod prompts;

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use futures::stream::{self, StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};

use crate::cohort::ImageCaseRecord;
use crate::endpoint::{
    complete_with_retry, image_part, ChatEndpoint, ChatMessage, DecodingParams, EndpointError, RetryPolicy,
};
use crate::labels::PartialLabels;
use crate::parser::{extract_labels, ParseErrorCode, SourceSpan};

pub use interview::{interview_script, run_interviews, InterviewRecord};
pub use prompts::{
    build_inference_prompt, InferencePrompt, PromptError, PromptKind, TaskHint, ADDITIONAL_QUESTIONS, ADVAMD_QUESTIONS,
    CLOSED_PROMPT, DRUS_QUESTIONS, INTERPRETATION_QUESTIONS, OPEN_SYSTEM, PIG_QUESTIONS,
};

/// Why a prediction carries no labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionError {
    NoJson,
    NoKnownKeys,
    ValueOutOfDomain,
    Transport,
}

impl From<ParseErrorCode> for PredictionError {
    fn from(c: ParseErrorCode) -> Self {
        match c {
            ParseErrorCode::NoJson => PredictionError::NoJson,
            ParseErrorCode::NoKnownKeys => PredictionError::NoKnownKeys,
            ParseErrorCode::ValueOutOfDomain => PredictionError::ValueOutOfDomain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub image_id: String,
    pub model_id: String,
    pub prompt_kind: PromptKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_hint: Option<TaskHint>,
    pub prompt_digest: String,
    pub raw_text: String,
    pub parsed: Option<PartialLabels>,
    pub parse_error: Option<PredictionError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_span: Option<SourceSpan>,
    pub latency_ms: u64,
    pub attempt: u32,
}

impl Prediction {
    /// Idempotency key: one prediction per (image, model, prompt).
    pub fn key(&self) -> (String, String, String) {
        (self.image_id.clone(), self.model_id.clone(), self.prompt_digest.clone())
    }

    /// Copy with latency zeroed, for reproducibility comparisons.
    pub fn without_latency(&self) -> Prediction {
        Prediction { latency_ms: 0, ..self.clone() }
    }

    /// Fills `parsed` / `parse_error` from `raw_text`.
    pub fn parse(&mut self) {
        if self.parse_error == Some(PredictionError::Transport) {
            return;
        }
        match extract_labels(&self.raw_text) {
            Ok(p) => {
                self.parsed = Some(p.labels);
                self.parse_error = None;
                self.source_span = Some(p.source_span);
            }
            Err(e) => {
                self.parsed = None;
                self.parse_error = Some(e.code.into());
                self.source_span = None;
            }
        }
    }
}

/// One image to send.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceCase {
    pub image_id: String,
    pub image_path: PathBuf,
}

impl InferenceCase {
    /// Resolves a relative manifest path against `base_dir`.
    pub fn from_record(record: &ImageCaseRecord, base_dir: &Path) -> Self {
        let p = Path::new(&record.image_path);
        let image_path = if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
        InferenceCase { image_id: record.image_id.clone(), image_path }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub concurrency: usize,
    pub retry: RetryPolicy,
    pub decoding: DecodingParams,
}

impl RunOptions {
    pub fn for_kind(kind: PromptKind) -> Self {
        let decoding = match kind {
            PromptKind::Closed => DecodingParams::CLOSED,
            PromptKind::Open => DecodingParams::OPEN,
        };
        RunOptions { concurrency: 8, retry: RetryPolicy::default(), decoding }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("endpoint for `{model_id}` rejected credentials: {message}")]
    Auth { model_id: String, message: String },
    #[error("cannot read image for `{image_id}` at {path}: {source}")]
    Image {
        image_id: String,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

async fn predict_one(
    case: &InferenceCase,
    endpoint: &dyn ChatEndpoint,
    model_id: &str,
    prompt: &InferencePrompt,
    digest: &str,
    opts: &RunOptions,
) -> Result<Prediction, InferenceError> {
    let image = image_part(&case.image_path).map_err(|source| InferenceError::Image {
        image_id: case.image_id.clone(),
        path: case.image_path.clone(),
        source,
    })?;
    let mut messages = Vec::with_capacity(2);
    if let Some(system) = &prompt.system {
        messages.push(ChatMessage::system(system.clone()));
    }
    messages.push(ChatMessage::user_with_image(image, prompt.text.clone()));
    let started = Instant::now();
    let (result, attempt) = complete_with_retry(endpoint, &messages, &opts.decoding, &opts.retry).await;
    let latency_ms = started.elapsed().as_millis() as u64;
    let mut prediction = Prediction {
        image_id: case.image_id.clone(),
        model_id: model_id.to_string(),
        prompt_kind: prompt.kind,
        task_hint: prompt.task_hint,
        prompt_digest: digest.to_string(),
        raw_text: String::new(),
        parsed: None,
        parse_error: None,
        source_span: None,
        latency_ms,
        attempt,
    };
    match result {
        Ok(text) => {
            prediction.raw_text = text;
            prediction.parse();
        }
        Err(EndpointError::Auth(message)) => {
            return Err(InferenceError::Auth { model_id: model_id.to_string(), message });
        }
        Err(e) => {
            tracing::warn!(image = %case.image_id, error = %e, attempt, "giving up on case");
            prediction.parse_error = Some(PredictionError::Transport);
        }
    }
    Ok(prediction)
}

/// Runs `prompt` over every case with at most `opts.concurrency` calls in flight.
///
/// Cases already present in `existing` under the same (image, model, prompt
/// digest) key are reused without a call. The result holds exactly one
/// prediction per case, in case order. Authentication failure aborts.
pub async fn run_batch(
    cases: &[InferenceCase],
    endpoint: Arc<dyn ChatEndpoint>,
    model_id: &str,
    prompt: &InferencePrompt,
    opts: &RunOptions,
    existing: &[Prediction],
) -> Result<Vec<Prediction>, InferenceError> {
    let digest = prompt.digest();
    let done: HashMap<(String, String, String), &Prediction> = existing.iter().map(|p| (p.key(), p)).collect();
    let digest = digest.as_str();
    stream::iter(cases)
        .map(|case| {
            let endpoint = Arc::clone(&endpoint);
            let key = (case.image_id.clone(), model_id.to_string(), digest.to_string());
            let prior = done.get(&key).map(|p| (*p).clone());
            async move {
                match prior {
                    Some(p) => Ok(p),
                    None => predict_one(case, endpoint.as_ref(), model_id, prompt, digest, opts).await,
                }
            }
        })
        .buffered(opts.concurrency.max(1))
        .try_collect()
        .await
}

pub fn write_predictions<W: Write>(mut out: W, predictions: &[Prediction]) -> std::io::Result<()> {
    for p in predictions {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("predictions line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<Prediction>, StoreError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| StoreError::Parse { line: i + 1, message: e.to_string() })?);
    }
    Ok(out)
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>, StoreError> {
    read_predictions(std::io::BufReader::new(std::fs::File::open(path)?))
}
