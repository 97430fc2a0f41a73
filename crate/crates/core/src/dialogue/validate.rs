//! Dialogue validation against reading-center labels.
//!
//! JSON-form answers are checked exactly. Open-form answers go through a
//! keyword rule table: each gpt turn is split into clauses, a clause that
//! mentions a task asserts a value, and a negation cue anywhere in the clause
//! flips a binary mention to 0 (or a bare drusen mention to small/none).
//! Rules err toward rejection.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{DialogueMode, Speaker, Turn, ValidationFailure, ValidationReport, IMAGE_TOKEN, REQUIRED_PAIRS};
use crate::labels::{ExamLabels, Task};
use crate::parser::normalize_key;

/// One task mention found in an open-form answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub task: Task,
    /// Classes the clause asserts; empty when it only rules a class out.
    pub values: Vec<u8>,
    pub clause: String,
}

fn re(pattern: &str) -> Regex {
    Regex::new(pattern).expect("static pattern")
}

static CLAUSE_BREAK: LazyLock<Regex> =
    LazyLock::new(|| re(r"[.;!?]+(\s+|$)|\s+but\s+|\s+however,?\s+|\s+although\s+|\s+whereas\s+|\s+while\s+|,\s+and\s+"));
static NEGATION: LazyLock<Regex> = LazyLock::new(|| {
    re(r"\b(no|not|without|absence|absent|negative|free of|none|neither|nor|never|rules? out|ruled out)\b|n't\b")
});
static ADVAMD: LazyLock<Regex> = LazyLock::new(|| {
    re(r"\b(advanced|late)(\s+stage)?(\s+|-)(amd|age-related macular degeneration|macular degeneration|disease)\b|\bgeographic atrophy\b|\bneovascular|\bwet amd\b")
});
static PIG: LazyLock<Regex> = LazyLock::new(|| re(r"\b(hyper|hypo|de)?pigment\w*"));
static DRUS: LazyLock<Regex> = LazyLock::new(|| re(r"\bdruse[n]?\b"));
static SMALL: LazyLock<Regex> = LazyLock::new(|| re(r"\b(small|tiny|minimal|few)\b"));
static INTERMEDIATE: LazyLock<Regex> = LazyLock::new(|| re(r"\b(intermediate|medium|moderate)(-sized)?\b"));
static LARGE: LazyLock<Regex> = LazyLock::new(|| re(r"\b(large|big)\b"));

fn drusen_values(clause: &str, negated: bool) -> Vec<u8> {
    let small = SMALL.is_match(clause);
    let mid = INTERMEDIATE.is_match(clause);
    let large = LARGE.is_match(clause);
    if negated {
        return if mid || large { Vec::new() } else { vec![0] };
    }
    let mut v = Vec::new();
    if small {
        v.push(0);
    }
    if mid {
        v.push(1);
    }
    if large {
        v.push(2);
    }
    v
}

/// Task mentions in one answer text, in clause order.
pub fn open_form_mentions(text: &str) -> Vec<Mention> {
    let lowered = text.to_lowercase();
    let mut out = Vec::new();
    for clause in CLAUSE_BREAK.split(&lowered).map(str::trim).filter(|c| !c.is_empty()) {
        let negated = NEGATION.is_match(clause);
        let binary = if negated { 0 } else { 1 };
        if ADVAMD.is_match(clause) {
            out.push(Mention { task: Task::Advamd, values: vec![binary], clause: clause.to_string() });
        }
        if PIG.is_match(clause) {
            out.push(Mention { task: Task::Pig, values: vec![binary], clause: clause.to_string() });
        }
        if DRUS.is_match(clause) {
            out.push(Mention { task: Task::Drus, values: drusen_values(clause, negated), clause: clause.to_string() });
        }
    }
    out
}

fn structure_failures(turns: &[Turn]) -> Vec<ValidationFailure> {
    let mut failures = Vec::new();
    if turns.len() != 2 * REQUIRED_PAIRS {
        failures.push(ValidationFailure::TurnCount);
    }
    let alternates = turns
        .iter()
        .enumerate()
        .all(|(i, t)| t.speaker == if i % 2 == 0 { Speaker::Human } else { Speaker::Gpt });
    if !alternates {
        failures.push(ValidationFailure::Format);
    }
    match turns.first() {
        Some(t) if t.speaker == Speaker::Human && t.text.starts_with(IMAGE_TOKEN) => {}
        _ => failures.push(ValidationFailure::Placeholder),
    }
    failures
}

fn json_failures(turns: &[Turn], labels: &ExamLabels) -> Vec<ValidationFailure> {
    let mut failures = Vec::new();
    let mut covered = BTreeSet::new();
    for turn in turns.iter().filter(|t| t.speaker == Speaker::Gpt) {
        let values: Result<Vec<Value>, _> = serde_json::Deserializer::from_str(turn.text.trim()).into_iter().collect();
        let values = match values {
            Ok(v) if !v.is_empty() => v,
            _ => {
                failures.push(ValidationFailure::Format);
                continue;
            }
        };
        for value in values {
            let Value::Object(map) = value else {
                failures.push(ValidationFailure::Format);
                continue;
            };
            for (key, v) in map {
                let (Some(task), Some(n)) = (normalize_key(&key), v.as_u64()) else {
                    failures.push(ValidationFailure::Format);
                    continue;
                };
                covered.insert(task);
                if n != u64::from(labels.get(task)) {
                    failures.push(ValidationFailure::LabelMismatch);
                }
            }
        }
    }
    if covered.len() < Task::ALL.len() {
        failures.push(ValidationFailure::Coverage);
    }
    failures
}

fn open_failures(turns: &[Turn], labels: &ExamLabels) -> Vec<ValidationFailure> {
    let mut failures = Vec::new();
    let mut covered = BTreeSet::new();
    for turn in turns.iter().filter(|t| t.speaker == Speaker::Gpt) {
        for m in open_form_mentions(&turn.text) {
            if !m.values.is_empty() {
                covered.insert(m.task);
            }
            if m.values.iter().any(|v| *v != labels.get(m.task)) {
                failures.push(ValidationFailure::LabelMismatch);
            }
        }
    }
    if covered.len() < Task::ALL.len() {
        failures.push(ValidationFailure::Coverage);
    }
    failures
}

/// Checks turn structure, the image placeholder and label consistency. Never fails.
pub fn validate_dialogue(mode: DialogueMode, turns: &[Turn], labels: &ExamLabels) -> ValidationReport {
    let mut failures = structure_failures(turns);
    failures.extend(match mode {
        DialogueMode::Json => json_failures(turns, labels),
        DialogueMode::Open => open_failures(turns, labels),
    });
    ValidationReport::from_failures(failures)
}
