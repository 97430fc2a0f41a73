//! Training-corpus documents in the `conversations` format.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{validate_dialogue, DialogueMode, DialogueRecord, Speaker, Turn, ValidationFailure};
use crate::cohort::ImageCaseRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub from: Speaker,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationDoc {
    pub id: String,
    pub image: String,
    pub mode: DialogueMode,
    pub conversations: Vec<ConversationTurn>,
}

impl ConversationDoc {
    pub fn turns(&self) -> Vec<Turn> {
        self.conversations.iter().map(|c| Turn { speaker: c.from, text: c.value.clone() }).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("dialogue for `{case_ref}` is invalid: {failures:?}")]
    Invalid { case_ref: String, failures: Vec<ValidationFailure> },
    #[error("dialogue is for `{dialogue}` but the record is `{record}`")]
    CaseMismatch { dialogue: String, record: String },
    #[error("corpus line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Builds the training document for a dialogue, re-validating it against the record's labels.
pub fn serialize_training_record(record: &ImageCaseRecord, dialogue: &DialogueRecord) -> Result<ConversationDoc, CorpusError> {
    if dialogue.case_ref != record.image_id {
        return Err(CorpusError::CaseMismatch { dialogue: dialogue.case_ref.clone(), record: record.image_id.clone() });
    }
    let report = validate_dialogue(dialogue.mode, &dialogue.turns, &record.labels);
    if !report.valid {
        return Err(CorpusError::Invalid { case_ref: dialogue.case_ref.clone(), failures: report.failures });
    }
    Ok(ConversationDoc {
        id: record.image_id.clone(),
        image: record.image_path.clone(),
        mode: dialogue.mode,
        conversations: dialogue
            .turns
            .iter()
            .map(|t| ConversationTurn { from: t.speaker, value: t.text.clone() })
            .collect(),
    })
}

pub fn write_corpus<W: Write>(mut out: W, docs: &[ConversationDoc]) -> std::io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<ConversationDoc>, CorpusError> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = serde_json::from_str(&line).map_err(|e| CorpusError::Parse { line: i + 1, message: e.to_string() })?;
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::synthetic::SyntheticCase;
    use crate::dialogue::fixtures::JSON_EXAMPLE;
    use crate::dialogue::{parse_turns, ValidationReport};
    use crate::labels::ExamLabels;

    fn setup() -> (ImageCaseRecord, DialogueRecord) {
        let record = SyntheticCase::new("IMG1", "P1").with_labels(ExamLabels { advamd: 0, pig: 0, drus: 1 }).into_record();
        let turns = parse_turns(JSON_EXAMPLE).unwrap();
        let validation = validate_dialogue(DialogueMode::Json, &turns, &record.labels);
        let dialogue =
            DialogueRecord { case_ref: "IMG1".into(), mode: DialogueMode::Json, turns, validation, attempts: 1, raw_text: None };
        (record, dialogue)
    }

    #[test]
    fn round_trip() {
        let (record, dialogue) = setup();
        let doc = serialize_training_record(&record, &dialogue).unwrap();
        assert!(doc.conversations[0].value.starts_with("<image>"));
        let mut buf = Vec::new();
        write_corpus(&mut buf, std::slice::from_ref(&doc)).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert!(line.starts_with(r#"{"id":"IMG1","image":"images/IMG1.jpg","mode":"json","conversations":[{"from":"human","value":"<image>"#));
        let back = read_corpus(buf.as_slice()).unwrap();
        assert_eq!(back, vec![doc.clone()]);
        assert_eq!(back[0].turns(), dialogue.turns);
        let mut again = Vec::new();
        write_corpus(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn invalid_dialogue_is_refused_even_if_flagged_valid() {
        let (record, mut dialogue) = setup();
        dialogue.turns[1].text = r#"{"DRUS": 2}"#.into();
        dialogue.validation = ValidationReport::from_failures(vec![]);
        assert!(matches!(serialize_training_record(&record, &dialogue), Err(CorpusError::Invalid { .. })));
    }

    #[test]
    fn distinct_dialogues_give_distinct_docs() {
        let (record, dialogue) = setup();
        let mut other = dialogue.clone();
        other.turns[0].text.push_str(" Thanks.");
        let a = serialize_training_record(&record, &dialogue).unwrap();
        let b = serialize_training_record(&record, &other).unwrap();
        assert_ne!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
