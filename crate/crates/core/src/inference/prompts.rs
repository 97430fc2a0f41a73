//! Evaluation prompt banks.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::provenance::{seeded_rng, sha256_hex};

/// Closed-ended classification prompt shared by every evaluated model.
pub const CLOSED_PROMPT: &str = "You are a highly experienced ophthalmologist specializing in retinal diseases. You will be shown a color fundus photograph of a patient's eye.

Your task is to identify key retinal features and return a structured response. You must only respond in JSON format using the following fields:

- Advanced AMD: 1 if late age-related macular degeneration is present, otherwise 0
- PIG: 1 if pigmentary abnormalities are present, otherwise 0
- DRUS: 0 if no drusen or small drusen, 1 if intermediate drusen, 2 if large drusen

Do not include any explanation, just return the JSON object. Please assess this fundus image and return your findings in the specified JSON format.";

/// System preamble for open-ended questioning.
pub const OPEN_SYSTEM: &str = "You are a highly experienced ophthalmologist specializing in retinal diseases.

You will be shown a color fundus photograph of a patient's eye.

Your task is to identify key retinal features and return responses.";

pub const ADVAMD_QUESTIONS: [&str; 3] = [
    "Are there signs of advanced AMD in this photo?",
    "Do you think the advanced AMD is present in this image?",
    "Can you tell me if the advanced age-related macular degeneration is present?",
];

pub const PIG_QUESTIONS: [&str; 3] = [
    "Are there any pigmentary abnormalities in the image?",
    "Could you tell me if I have any pigmentary abnormalities from the retinal image?",
    "What are my exam results regarding pigmentary changes?",
];

pub const DRUS_QUESTIONS: [&str; 3] = [
    "What can you tell me about the drusen size and distribution?",
    "Can you tell me about my drusen size?",
    "What size are the drusen from my retinal image?",
];

pub const INTERPRETATION_QUESTIONS: [&str; 3] = [
    "Can you be more specific about your findings?",
    "Can you give me the evidence that support your prediction?",
    "How do you analyze my retinal image and make this decision, please give me more details?",
];

pub const ADDITIONAL_QUESTIONS: [&str; 3] = [
    "What else can you tell me about this image?",
    "Is there anything else I should know?",
    "Can you detect something else from this image?",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Closed,
    Open,
}

impl FromStr for PromptKind {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "closed" => Ok(PromptKind::Closed),
            "open" => Ok(PromptKind::Open),
            _ => Err(PromptError::UnknownKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskHint {
    #[serde(rename = "ADVAMD")]
    Advamd,
    #[serde(rename = "PIG")]
    Pig,
    #[serde(rename = "DRUS")]
    Drus,
    #[serde(rename = "interpretation")]
    Interpretation,
    #[serde(rename = "additional")]
    Additional,
}

impl TaskHint {
    pub const ALL: [TaskHint; 5] =
        [TaskHint::Advamd, TaskHint::Pig, TaskHint::Drus, TaskHint::Interpretation, TaskHint::Additional];

    pub fn questions(self) -> &'static [&'static str; 3] {
        match self {
            TaskHint::Advamd => &ADVAMD_QUESTIONS,
            TaskHint::Pig => &PIG_QUESTIONS,
            TaskHint::Drus => &DRUS_QUESTIONS,
            TaskHint::Interpretation => &INTERPRETATION_QUESTIONS,
            TaskHint::Additional => &ADDITIONAL_QUESTIONS,
        }
    }
}

impl fmt::Display for TaskHint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskHint::Advamd => "ADVAMD",
            TaskHint::Pig => "PIG",
            TaskHint::Drus => "DRUS",
            TaskHint::Interpretation => "interpretation",
            TaskHint::Additional => "additional",
        })
    }
}

impl FromStr for TaskHint {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "advamd" => Ok(TaskHint::Advamd),
            "pig" => Ok(TaskHint::Pig),
            "drus" => Ok(TaskHint::Drus),
            "interpretation" => Ok(TaskHint::Interpretation),
            "additional" => Ok(TaskHint::Additional),
            _ => Err(PromptError::UnknownHint(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("unknown task hint `{0}`")]
    UnknownHint(String),
    #[error("unknown prompt kind `{0}`")]
    UnknownKind(String),
    #[error("open prompts need a task hint")]
    MissingHint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferencePrompt {
    pub kind: PromptKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_hint: Option<TaskHint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub text: String,
}

impl InferencePrompt {
    /// SHA-256 of the system text, a NUL byte, and the user text.
    pub fn digest(&self) -> String {
        let mut buf = self.system.clone().unwrap_or_default().into_bytes();
        buf.push(0);
        buf.extend_from_slice(self.text.as_bytes());
        sha256_hex(&buf)
    }
}

/// Closed kind ignores the seed. Open kind draws uniformly from the hint's bank.
pub fn build_inference_prompt(kind: PromptKind, task_hint: Option<TaskHint>, seed: u64) -> Result<InferencePrompt, PromptError> {
    match kind {
        PromptKind::Closed => Ok(InferencePrompt { kind, task_hint, system: None, text: CLOSED_PROMPT.to_string() }),
        PromptKind::Open => {
            let hint = task_hint.ok_or(PromptError::MissingHint)?;
            let bank = hint.questions();
            let i = seeded_rng(seed).random_range(0..bank.len());
            Ok(InferencePrompt { kind, task_hint, system: Some(OPEN_SYSTEM.to_string()), text: bank[i].to_string() })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_prompt_is_fixed() {
        let p = build_inference_prompt(PromptKind::Closed, None, 1).unwrap();
        assert!(p.text.contains("just return the JSON object"));
        assert_eq!(p, build_inference_prompt(PromptKind::Closed, None, 99).unwrap());
    }

    #[test]
    fn open_draws_from_bank() {
        let p = build_inference_prompt(PromptKind::Open, Some(TaskHint::Drus), 5).unwrap();
        assert!(DRUS_QUESTIONS.contains(&p.text.as_str()));
        assert_eq!(p, build_inference_prompt(PromptKind::Open, Some(TaskHint::Drus), 5).unwrap());
        let seen: std::collections::BTreeSet<String> = (0..64)
            .map(|s| build_inference_prompt(PromptKind::Open, Some(TaskHint::Drus), s).unwrap().text)
            .collect();
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn hints() {
        assert_eq!("DRUS".parse::<TaskHint>().unwrap(), TaskHint::Drus);
        assert!("FIG".parse::<TaskHint>().is_err());
        assert_eq!(build_inference_prompt(PromptKind::Open, None, 0), Err(PromptError::MissingHint));
    }

    #[test]
    fn digest_separates_system_and_text() {
        let a = InferencePrompt { kind: PromptKind::Open, task_hint: None, system: Some("ab".into()), text: "c".into() };
        let b = InferencePrompt { kind: PromptKind::Open, task_hint: None, system: Some("a".into()), text: "bc".into() };
        assert_ne!(a.digest(), b.digest());
    }
}
