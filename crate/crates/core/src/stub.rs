//! Offline endpoint that answers from ground truth with a fixed accuracy.
//!
//! Images are recognised by the SHA-256 of their bytes. Whether a given
//! (image, task) answer is correct is a pure function of the seed, so runs
//! are reproducible regardless of scheduling.

use std::collections::HashMap;
use std::path::Path;

use async_trait::async_trait;
use base64::Engine;

use crate::cohort::CohortManifest;
use crate::endpoint::{ChatEndpoint, ChatMessage, ContentPart, DecodingParams, EndpointError, MessageContent};
use crate::labels::{ExamLabels, Task};
use crate::parser::canonical_answer;
use crate::provenance::sha256_hex;

#[derive(Debug, Clone)]
pub struct StubEndpoint {
    by_digest: HashMap<String, ExamLabels>,
    accuracy: f64,
    seed: u64,
    name: Option<String>,
}

impl StubEndpoint {
    pub fn new(accuracy: f64, seed: u64) -> Self {
        StubEndpoint { by_digest: HashMap::new(), accuracy: accuracy.clamp(0.0, 1.0), seed, name: None }
    }

    /// Registers the image bytes of one case.
    pub fn with_image(mut self, bytes: &[u8], labels: ExamLabels) -> Self {
        self.by_digest.insert(sha256_hex(bytes), labels);
        self
    }

    /// Makes open-form replies introduce themselves by `name`; used to exercise redaction.
    pub fn introducing(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// Reads every image of `manifest` relative to `base_dir`.
    pub fn from_manifest(manifest: &CohortManifest, base_dir: &Path, accuracy: f64, seed: u64) -> std::io::Result<Self> {
        let mut stub = StubEndpoint::new(accuracy, seed);
        for r in manifest.records() {
            let bytes = std::fs::read(base_dir.join(&r.image_path))?;
            stub = stub.with_image(&bytes, r.labels);
        }
        Ok(stub)
    }

    fn correct(&self, digest: &str, task: Task) -> bool {
        let h = sha256_hex(format!("{}\0{digest}\0{}", self.seed, task.key()));
        let u = u64::from_str_radix(&h[..16], 16).expect("hex digest") as f64 / u64::MAX as f64;
        u < self.accuracy
    }

    /// The labels this stub reports for an image.
    pub fn answer_for(&self, digest: &str) -> Option<ExamLabels> {
        let truth = self.by_digest.get(digest)?;
        let mut out = *truth;
        for t in Task::ALL {
            if !self.correct(digest, t) {
                out.set(t, (truth.get(t) + 1) % t.num_classes());
            }
        }
        Some(out)
    }

    fn open_reply(&self, labels: Option<ExamLabels>, question: &str) -> String {
        let intro = self.name.as_deref().map(|n| format!("As {n}, ")).unwrap_or_default();
        match labels {
            Some(l) => {
                let advamd = if l.advamd == 1 { "signs of advanced AMD" } else { "no advanced AMD" };
                let pig = if l.pig == 1 { "pigmentary abnormalities" } else { "no pigmentary abnormalities" };
                let drus = ["small or no drusen", "intermediate drusen", "large drusen"][l.drus as usize];
                format!("{intro}I see {drus}, {pig} and {advamd}.")
            }
            None => format!("{intro}regarding \"{question}\": please discuss this with your eye doctor."),
        }
    }
}

fn image_digest(messages: &[ChatMessage]) -> Result<Option<String>, EndpointError> {
    for m in messages {
        if let MessageContent::Parts(parts) = &m.content {
            for p in parts {
                if let ContentPart::ImageUrl { image_url } = p {
                    let data = image_url
                        .url
                        .split_once(";base64,")
                        .map(|(_, d)| d)
                        .ok_or_else(|| EndpointError::Malformed("image is not a base64 data url".into()))?;
                    let bytes = base64::engine::general_purpose::STANDARD
                        .decode(data)
                        .map_err(|e| EndpointError::Malformed(e.to_string()))?;
                    return Ok(Some(sha256_hex(bytes)));
                }
            }
        }
    }
    Ok(None)
}

#[async_trait]
impl ChatEndpoint for StubEndpoint {
    async fn complete(&self, messages: &[ChatMessage], _params: &DecodingParams) -> Result<String, EndpointError> {
        let digest = image_digest(messages)?;
        let labels = digest.as_deref().and_then(|d| self.answer_for(d));
        let has_system = messages.iter().any(|m| m.role == "system");
        if has_system {
            let question = messages.iter().rev().find(|m| m.role == "user").map(|m| m.content.text()).unwrap_or_default();
            return Ok(self.open_reply(labels, &question));
        }
        match labels {
            Some(l) => Ok(canonical_answer(&l)),
            None => Ok("I cannot assess this image.".into()),
        }
    }
}
