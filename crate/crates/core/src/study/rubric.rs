//! The four-question Likert grading rubric.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Question {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl Question {
    pub const ALL: [Question; 4] = [Question::Q1, Question::Q2, Question::Q3, Question::Q4];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column label in summary tables.
    pub fn label(self) -> &'static str {
        match self {
            Question::Q1 => "ADVAMD (Q1)",
            Question::Q2 => "PIG (Q2)",
            Question::Q3 => "DRUS (Q3)",
            Question::Q4 => "Overall (Q4)",
        }
    }

    pub fn rubric(self) -> &'static RubricQuestion {
        &RUBRIC[self.index()]
    }
}

impl fmt::Display for Question {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}", self.index() + 1)
    }
}

impl FromStr for Question {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "Q1" => Ok(Question::Q1),
            "Q2" => Ok(Question::Q2),
            "Q3" => Ok(Question::Q3),
            "Q4" => Ok(Question::Q4),
            _ => Err(format!("unknown rubric question `{s}`")),
        }
    }
}

pub const MIN_SCORE: u8 = 1;
pub const MAX_SCORE: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RubricQuestion {
    pub question: Question,
    pub statement: &'static str,
    pub introduction: &'static str,
    pub considerations: &'static [&'static str],
    /// Descriptors for scores 1, 2, ... in order. The published Q4 criteria stop at 4.
    pub criteria: &'static [&'static str],
}

impl RubricQuestion {
    pub fn descriptor(&self, score: u8) -> Option<&'static str> {
        let i = usize::from(score).checked_sub(1)?;
        self.criteria.get(i).copied()
    }
}

pub const RUBRIC_TITLE: &str = "Grading Criteria - Retinal Findings (Core AMD Features)";

pub static RUBRIC: [RubricQuestion; 4] = [
    RubricQuestion {
        question: Question::Q1,
        statement: "Q1. The model correctly identifies the presence or absence of advanced AMD.",
        introduction: "Introduction: The model provides a binary prediction (advanced AMD: Yes or No). Evaluate:",
        considerations: &[
            "Is the diagnosis correct based on the fundus image?",
            "Are hallmark features of advanced AMD (e.g., geographic atrophy, hemorrhage, subretinal fluid, disciform scars) visible to support the diagnosis?",
            "If asked, does the model give a plausible rationale (even if incomplete or implicit)?",
        ],
        criteria: &[
            "Model prediction is incorrect (e.g., predicts advanced AMD when features are clearly absent, or misses clear signs). No visible features to support claim.",
            "Prediction may be borderline correct, but lacks clear visible justification (e.g., subtle atrophy or ambiguous signs). Reasoning unclear or absent.",
            "Prediction is plausible and some image-based evidence is present (e.g., early GA or fibrotic tissue). Minor uncertainty exists.",
            "Correct diagnosis with supporting visible features. Clinically coherent. Reasoning is plausible if provided.",
            "Clear and correct prediction with strong visual support (GA or nAMD signs clearly visible). Model would be trustworthy in clinical use.",
        ],
    },
    RubricQuestion {
        question: Question::Q2,
        statement: "Q2. Pigmentary abnormalities are appropriately detected.",
        introduction: "Introduction: The model predicts presence/absence of pigmentary abnormalities. Consider:",
        considerations: &[
            "Are hypo/hyperpigmented areas present and reasonably interpreted?",
            "Does the model's output align with what you see?",
            "If asked, does the model give a plausible explanation (e.g., mentions of mottling, clumping, depigmentation)?",
        ],
        criteria: &[
            "Model missed clear pigmentary changes or falsely claimed them. No visual support. Reasoning (if any) is incorrect.",
            "Some pigmentary change may be visible, but model prediction is off or ambiguous. Reasoning absent or inaccurate.",
            "Prediction is plausible with some supporting visual features. Reasoning unclear but not obviously wrong.",
            "Correctly identifies pigmentary changes with visible support. Reasoning plausible if queried.",
            "Prediction matches clinical observation; pigmentation abnormalities are clear. Reasoning, if requested, aligns with clinical criteria.",
        ],
    },
    RubricQuestion {
        question: Question::Q3,
        statement: "Q3. Drusen size is accurately categorized.",
        introduction: "Introduction: The model outputs a categorical decision: none/small, intermediate, and large. Consider:",
        considerations: &[
            "Is the prediction correct based on the image?",
            "Can you identify visible supporting features for the prediction?",
            "If you asked the model for an explanation, was the reasoning (if any) correct, incorrect, or unavailable?",
        ],
        criteria: &[
            "Prediction is incorrect, and no clear soft drusen are visible (or falsely claimed). Reasoning (if available) is incorrect or absent.",
            "Prediction may be correct or borderline, but supporting features are unclear or weak. Reasoning not available or inaccurate.",
            "Prediction is plausible, and visible evidence (e.g., well-defined, yellowish deposits) is present, even if not explicitly highlighted. Reasoning (if requested) may be absent or partial.",
            "Correct prediction with supporting image features visible. Reasoning is plausible if provided.",
            "Correct prediction, supported by clearly visible soft drusen. Reasoning is accurate, or clinician could easily infer the same conclusion independently.",
        ],
    },
    RubricQuestion {
        question: Question::Q4,
        statement: "Q4. Overall Assessment: The model's outputs are useful for clinical decision-making in AMD and general retinal care.",
        introduction: "Introduction: Consider:",
        considerations: &[
            "Whether the model's diagnostic outputs (e.g., AMD stage, systemic risks) are correct or clinically reasonable.",
            "Whether it missed any obvious or important findings visible in the image.",
            "Whether it hallucinated findings (i.e., reported conditions do not present in the image).",
        ],
        criteria: &[
            "Outputs are mostly incorrect, miss key findings, or include hallucinated diagnoses. Clinical utility is low or potentially misleading.",
            "Some outputs are reasonable, but the model either misses important features or makes unsupported claims. Use would require significant clinician correction.",
            "Outputs are partly useful \u{2014} major findings generally present, some minor omissions or questionable statements. Would use with caution.",
            "Most outputs are correct and relevant. Only minor omissions or borderline findings; enhances efficiency with limited oversight.",
        ],
    },
];

/// Plain-text rendering embedded in every grading packet.
pub fn rubric_text() -> String {
    let mut out = String::from(RUBRIC_TITLE);
    for q in &RUBRIC {
        out.push_str("\n\n");
        out.push_str(q.statement);
        out.push('\n');
        out.push_str(q.introduction);
        for c in q.considerations {
            out.push_str("\n- ");
            out.push_str(c);
        }
        out.push_str("\nScoring Criteria");
        for (i, c) in q.criteria.iter().enumerate() {
            out.push_str(&format!("\n- {}: {}", i + 1, c));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q1_top_descriptor() {
        assert_eq!(
            Question::Q1.rubric().descriptor(5).unwrap(),
            "Clear and correct prediction with strong visual support (GA or nAMD signs clearly visible). Model would be trustworthy in clinical use."
        );
        assert!(Question::Q1.rubric().descriptor(0).is_none());
        assert!(Question::Q4.rubric().descriptor(5).is_none());
    }

    #[test]
    fn text_contains_every_statement() {
        let t = rubric_text();
        for q in &RUBRIC {
            assert!(t.contains(q.statement));
        }
        assert_eq!("q3".parse::<Question>().unwrap(), Question::Q3);
        assert_eq!(Question::Q2.to_string(), "Q2");
    }
}
