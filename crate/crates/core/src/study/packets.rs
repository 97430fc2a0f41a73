//! Blinded grading packets.

use std::collections::BTreeMap;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::plan::AssignmentPlan;
use super::rubric::rubric_text;
use super::StudyError;
use crate::cohort::CohortManifest;
use crate::dialogue::Turn;
use crate::inference::InterviewRecord;
use crate::labels::ExamLabels;

pub const REDACTION: &str = "[redacted]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradingPacket {
    pub packet_id: String,
    pub image_id: String,
    pub image_ref: String,
    pub labels: ExamLabels,
    pub transcript: Vec<Turn>,
    pub rubric: String,
}

/// First model id found in `text`, ignoring case.
pub fn audit_blinding<'a>(text: &str, model_ids: &'a [String]) -> Option<&'a str> {
    let lower = text.to_lowercase();
    model_ids.iter().find(|m| !m.is_empty() && lower.contains(&m.to_lowercase())).map(String::as_str)
}

/// Case-insensitive replacement of model ids, compiled once.
#[derive(Debug, Clone)]
pub struct Redactor {
    pattern: Option<Regex>,
}

impl Redactor {
    /// Longer ids take precedence where they overlap shorter ones.
    pub fn new(model_ids: &[String]) -> Self {
        let mut ids: Vec<&String> = model_ids.iter().filter(|m| !m.is_empty()).collect();
        ids.sort_by_key(|m| std::cmp::Reverse(m.len()));
        let pattern = (!ids.is_empty()).then(|| {
            let alternation: Vec<String> = ids.iter().map(|m| regex::escape(m)).collect();
            RegexBuilder::new(&alternation.join("|")).case_insensitive(true).build().expect("escaped literals")
        });
        Redactor { pattern }
    }

    pub fn redact(&self, text: &str) -> String {
        match &self.pattern {
            Some(re) => re.replace_all(text, REDACTION).into_owned(),
            None => text.to_string(),
        }
    }
}

/// Replaces every model id in `text`, ignoring case, longest ids first.
pub fn redact(text: &str, model_ids: &[String]) -> String {
    Redactor::new(model_ids).redact(text)
}

/// One packet per sealed entry, sorted by packet id. Model ids in transcripts
/// are redacted and every serialized packet is audited.
pub fn blind_export(
    plan: &AssignmentPlan,
    manifest: &CohortManifest,
    transcripts: &[InterviewRecord],
) -> Result<Vec<GradingPacket>, StudyError> {
    let models = plan.models();
    let by_pair: BTreeMap<(&str, &str), &InterviewRecord> =
        transcripts.iter().map(|t| ((t.image_id.as_str(), t.model_id.as_str()), t)).collect();
    let rubric = rubric_text();
    let redactor = Redactor::new(models);
    let mut packets = Vec::with_capacity(plan.sealed.packets.len());
    for (packet_id, entry) in &plan.sealed.packets {
        let record = manifest.get(&entry.case_id).ok_or_else(|| StudyError::UnknownCase(entry.case_id.clone()))?;
        let interview = by_pair.get(&(entry.case_id.as_str(), entry.model_id.as_str())).ok_or_else(|| {
            StudyError::MissingDialogue { case_id: entry.case_id.clone(), model_id: entry.model_id.clone() }
        })?;
        let transcript = interview
            .turns
            .iter()
            .map(|t| Turn { speaker: t.speaker, text: redactor.redact(&t.text) })
            .collect();
        let packet = GradingPacket {
            packet_id: packet_id.clone(),
            image_id: record.image_id.clone(),
            image_ref: record.image_path.clone(),
            labels: record.labels,
            transcript,
            rubric: rubric.clone(),
        };
        let bytes = serde_json::to_string(&packet).expect("packet serializes");
        if audit_blinding(&bytes, models).is_some() {
            return Err(StudyError::BlindingViolation { packet_id: packet_id.clone() });
        }
        packets.push(packet);
    }
    Ok(packets)
}
