//! Dialogue generation prompts, transcript parsing, validation against
//! reading-center labels, and training-record serialization.

mod corpus;
mod generate;
mod templates;
mod transcript;
mod validate;

use serde::{Deserialize, Serialize};

use crate::cohort::ImageCaseRecord;

pub use corpus::{read_corpus, serialize_training_record, write_corpus, ConversationDoc, ConversationTurn, CorpusError};
pub use generate::{generate_batch, generate_dialogue, GenerationError, GenerationParams};
pub use templates::{fill, JSON_CASE_BLOCK, JSON_TEMPLATE, OPEN_TEMPLATE};
pub use transcript::{parse_turns, TranscriptError};
pub use validate::{open_form_mentions, validate_dialogue, Mention};

/// The literal image placeholder that opens the first human turn.
pub const IMAGE_TOKEN: &str = "<image>";

/// Number of human/gpt exchanges every dialogue must contain.
pub const REQUIRED_PAIRS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DialogueMode {
    Open,
    Json,
}

impl std::str::FromStr for DialogueMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "open" => Ok(DialogueMode::Open),
            "json" => Ok(DialogueMode::Json),
            _ => Err(format!("unknown dialogue mode `{s}` (expected open or json)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Human,
    Gpt,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::Human => "human",
            Speaker::Gpt => "gpt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

impl Turn {
    pub fn human(text: impl Into<String>) -> Self {
        Turn { speaker: Speaker::Human, text: text.into() }
    }

    pub fn gpt(text: impl Into<String>) -> Self {
        Turn { speaker: Speaker::Gpt, text: text.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationFailure {
    TurnCount,
    Coverage,
    LabelMismatch,
    Format,
    Placeholder,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub failures: Vec<ValidationFailure>,
}

impl ValidationReport {
    /// Builds a report from failures; duplicates collapse and order is canonical.
    pub fn from_failures(mut failures: Vec<ValidationFailure>) -> Self {
        failures.sort();
        failures.dedup();
        ValidationReport { valid: failures.is_empty(), failures }
    }

    pub fn has(&self, failure: ValidationFailure) -> bool {
        self.failures.contains(&failure)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialoguePrompt {
    pub mode: DialogueMode,
    pub text: String,
    pub case_ref: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub case_ref: String,
    pub mode: DialogueMode,
    pub turns: Vec<Turn>,
    pub validation: ValidationReport,
    /// Generation attempts used, including the returned one.
    #[serde(default)]
    pub attempts: u32,
    /// Raw text of the returned attempt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
}

/// Renders the generation prompt for one case.
pub fn render_dialogue_prompt(record: &ImageCaseRecord, mode: DialogueMode) -> DialoguePrompt {
    let text = match mode {
        DialogueMode::Open => fill(OPEN_TEMPLATE, record),
        DialogueMode::Json => format!("{JSON_TEMPLATE}{}", fill(JSON_CASE_BLOCK, record)),
    };
    DialoguePrompt { mode, text, case_ref: record.image_id.clone() }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::Turn;

    /// The JSON-form example transcript, labels (advamd 0, pig 0, drus 1).
    pub const JSON_EXAMPLE: &str = r#""conversations":
[
  "from": "human", "value": "<image>Can you tell me if I have intermediate drusen from my exam results? Please answer in JSON format.",
  "from": "gpt", "value": "{\"DRUS\": 1}",
  "from": "human", "value": "Do I have advanced age-related macular degeneration based on my retinal image? Please respond in JSON format.",
  "from": "gpt", "value": "{\"ADVAMD\": 0}",
  "from": "human", "value": "Is there any abnormal pigmentary in my exam results? Answer in JSON format.",
  "from": "gpt", "value": "{\"PIG\": 0}"
]"#;

    /// The open-form example transcript, same labels.
    pub fn open_example() -> Vec<Turn> {
        vec![
            Turn::human("<image>What do my exam results indicate about my eyes?"),
            Turn::gpt("Your results show intermediate drusen but no advanced age-related macular degeneration or pigment changes."),
            Turn::human("Is this something I should be concerned about given my age?"),
            Turn::gpt("Intermediate drusen can increase the risk of developing age-related macular degeneration, especially at your age, but there are no signs of advanced disease currently."),
            Turn::human("Does smoking affect my risk of macular degeneration?"),
            Turn::gpt("Yes, smoking can significantly increase your risk of developing macular degeneration. It would be beneficial to consider quitting."),
        ]
    }
}
