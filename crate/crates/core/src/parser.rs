//! Extraction of task labels from free-form model output.
//!
//! Rules, in order:
//! 1. every balanced `{...}` span is a candidate; spans that are not valid
//!    JSON get one repair attempt (single quotes, trailing commas, Python
//!    literals) before being discarded;
//! 2. the last top-level candidate that parses wins;
//! 3. keys are matched case-insensitively against a fixed alias table, with
//!    `_` and `-` treated as spaces; if the winning object has no known key,
//!    its nested objects are searched (last match wins);
//! 4. values are coerced from integers, numeric strings, booleans (binary
//!    tasks only) and a fixed word table, never outside the task domain.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::labels::{PartialLabels, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorCode {
    NoJson,
    NoKnownKeys,
    ValueOutOfDomain,
}

impl std::fmt::Display for ParseErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ParseErrorCode::NoJson => "no_json",
            ParseErrorCode::NoKnownKeys => "no_known_keys",
            ParseErrorCode::ValueOutOfDomain => "value_out_of_domain",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{code}")]
pub struct ParseError {
    pub code: ParseErrorCode,
}

impl From<ParseErrorCode> for ParseError {
    fn from(code: ParseErrorCode) -> Self {
        ParseError { code }
    }
}

/// Half-open character range `[start, end)` of the object used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedLabels {
    #[serde(flatten)]
    pub labels: PartialLabels,
    pub source_span: SourceSpan,
}

/// Maps a raw key to its task, if it is one of the known aliases.
pub fn normalize_key(key: &str) -> Option<Task> {
    let lowered = key.to_lowercase().replace(['_', '-'], " ");
    let norm = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    match norm.as_str() {
        "advanced amd" | "advamd" | "adv amd" => Some(Task::Advamd),
        "pig" | "pigmentary" | "pigmentary abnormalities" => Some(Task::Pig),
        "drus" | "drusen" | "drusen size" => Some(Task::Drus),
        _ => None,
    }
}

fn word_class(task: Task, word: &str) -> Option<u8> {
    match (task, word) {
        (Task::Drus, "small" | "none" | "no" | "absent") => Some(0),
        (Task::Drus, "intermediate") => Some(1),
        (Task::Drus, "large") => Some(2),
        (Task::Advamd | Task::Pig, "yes" | "present") => Some(1),
        (Task::Advamd | Task::Pig, "no" | "absent" | "none") => Some(0),
        _ => None,
    }
}

fn coerce_int(task: Task, x: i64) -> Option<u8> {
    u8::try_from(x).ok().filter(|v| task.contains(*v))
}

/// Coerces one JSON value into the task's label domain.
pub fn coerce_value(task: Task, value: &Value) -> Option<u8> {
    match value {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                coerce_int(task, i)
            } else {
                let f = n.as_f64()?;
                (f.fract() == 0.0 && f.abs() < 1e6).then(|| coerce_int(task, f as i64)).flatten()
            }
        }
        Value::Bool(b) if task.is_binary() => Some(u8::from(*b)),
        Value::String(s) => {
            let t = s.trim().trim_end_matches(['.', '!']).trim();
            if let Ok(i) = t.parse::<i64>() {
                return coerce_int(task, i);
            }
            if let Ok(f) = t.parse::<f64>() {
                return (f.fract() == 0.0 && f.abs() < 1e6).then(|| coerce_int(task, f as i64)).flatten();
            }
            let lowered = t.to_lowercase();
            let words: Vec<&str> =
                lowered.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect();
            if words.iter().any(|w| *w == "not") {
                return None;
            }
            let mut classes: Vec<u8> = words.iter().filter_map(|w| word_class(task, w)).collect();
            classes.sort_unstable();
            classes.dedup();
            match classes.as_slice() {
                [one] => Some(*one),
                _ => None,
            }
        }
        _ => None,
    }
}

/// End byte offset (inclusive) of the balanced object starting at `start`.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    debug_assert_eq!(bytes[start], b'{');
    let mut depth = 0usize;
    let mut quote: Option<u8> = None;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == q {
                quote = None;
            }
            continue;
        }
        match b {
            b'"' => quote = Some(b'"'),
            b'{' | b'[' => depth += 1,
            b'}' | b']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return (b == b'}').then_some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Light repair of near-JSON: single-quoted strings, trailing commas, Python literals.
fn repair(candidate: &str) -> String {
    let mut out = String::with_capacity(candidate.len());
    let mut chars = candidate.chars().peekable();
    let mut in_double = false;
    let mut in_single = false;
    let mut escaped = false;
    while let Some(c) = chars.next() {
        if in_double || in_single {
            if escaped {
                escaped = false;
                out.push(c);
                continue;
            }
            match c {
                '\\' => {
                    escaped = true;
                    out.push(c);
                }
                '"' if in_double => {
                    in_double = false;
                    out.push(c);
                }
                '"' if in_single => out.push_str("\\\""),
                '\'' if in_single => {
                    in_single = false;
                    out.push('"');
                }
                _ => out.push(c),
            }
            continue;
        }
        match c {
            '"' => {
                in_double = true;
                out.push(c);
            }
            '\'' => {
                in_single = true;
                out.push('"');
            }
            ',' => {
                let mut lookahead = chars.clone();
                while lookahead.peek().is_some_and(|n| n.is_whitespace()) {
                    lookahead.next();
                }
                if !matches!(lookahead.peek(), Some('}') | Some(']')) {
                    out.push(c);
                }
            }
            _ => out.push(c),
        }
    }
    out.replace(": True", ": true").replace(": False", ": false").replace(": None", ": null")
}

fn parse_object(candidate: &str) -> Option<Map<String, Value>> {
    match serde_json::from_str::<Value>(candidate) {
        Ok(Value::Object(map)) => Some(map),
        Ok(_) => None,
        Err(_) => match serde_json::from_str::<Value>(&repair(candidate)) {
            Ok(Value::Object(map)) => Some(map),
            _ => None,
        },
    }
}

/// Top-level JSON objects in `text`, as (byte start, byte end exclusive, object).
pub fn json_objects(text: &str) -> Vec<(usize, usize, Map<String, Value>)> {
    let mut found = Vec::new();
    let mut i = 0;
    while let Some(offset) = text[i..].find('{') {
        let start = i + offset;
        match balanced_end(text, start).and_then(|end| parse_object(&text[start..=end]).map(|o| (end, o))) {
            Some((end, object)) => {
                found.push((start, end + 1, object));
                i = end + 1;
            }
            None => i = start + 1,
        }
    }
    found
}

fn known_entries(object: &Map<String, Value>) -> Vec<(Task, &Value)> {
    object.iter().filter_map(|(k, v)| normalize_key(k).map(|t| (t, v))).collect()
}

fn find_labeled<'a>(object: &'a Map<String, Value>) -> Option<Vec<(Task, &'a Value)>> {
    let entries = known_entries(object);
    if !entries.is_empty() {
        return Some(entries);
    }
    object
        .values()
        .filter_map(|v| v.as_object())
        .filter_map(find_labeled)
        .last()
}

/// Extracts task labels from raw model text.
pub fn extract_labels(raw_text: &str) -> Result<ParsedLabels, ParseError> {
    let objects = json_objects(raw_text);
    let (start, end, object) = objects.last().ok_or(ParseErrorCode::NoJson)?;
    let entries = find_labeled(object).ok_or(ParseErrorCode::NoKnownKeys)?;
    let mut labels = PartialLabels::default();
    for (task, value) in entries {
        if let Some(v) = coerce_value(task, value) {
            labels.set(task, v);
        }
    }
    if labels.is_empty() {
        return Err(ParseErrorCode::ValueOutOfDomain.into());
    }
    let source_span = SourceSpan {
        start: raw_text[..*start].chars().count(),
        end: raw_text[..*end].chars().count(),
    };
    Ok(ParsedLabels { labels, source_span })
}

/// Canonical answer text for a full label set, in the closed-prompt field names.
pub fn canonical_answer(labels: &crate::labels::ExamLabels) -> String {
    format!(
        r#"{{"Advanced AMD": {}, "PIG": {}, "DRUS": {}}}"#,
        labels.advamd, labels.pig, labels.drus
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::ExamLabels;

    fn ok(text: &str) -> PartialLabels {
        extract_labels(text).unwrap().labels
    }

    fn err(text: &str) -> ParseErrorCode {
        extract_labels(text).unwrap_err().code
    }

    #[test]
    fn closed_prompt_field_names() {
        let l = ok(r#"{"Advanced AMD": 1, "PIG": 0, "DRUS": 2}"#);
        assert_eq!(l, PartialLabels { advamd: Some(1), pig: Some(0), drus: Some(2) });
    }

    #[test]
    fn words_and_prose_prefix() {
        let l = ok(r#"Here are my findings: {"ADVAMD": "No", "DRUS": "large"}"#);
        assert_eq!(l, PartialLabels { advamd: Some(0), pig: None, drus: Some(2) });
    }

    #[test]
    fn prose_without_json() {
        assert_eq!(err("The patient likely has large drusen."), ParseErrorCode::NoJson);
        assert_eq!(err(""), ParseErrorCode::NoJson);
    }

    #[test]
    fn last_object_wins() {
        let l = ok(r#"First guess {"PIG": 1}. On reflection {"PIG": 0}"#);
        assert_eq!(l.pig, Some(0));
    }

    #[test]
    fn error_codes() {
        assert_eq!(err(r#"{"confidence": 0.8}"#), ParseErrorCode::NoKnownKeys);
        assert_eq!(err(r#"{"DRUS": 7}"#), ParseErrorCode::ValueOutOfDomain);
        assert_eq!(err(r#"{"PIG": "large"}"#), ParseErrorCode::ValueOutOfDomain);
    }

    #[test]
    fn span_is_character_range() {
        let text = "é {\"PIG\": 1} tail";
        let parsed = extract_labels(text).unwrap();
        let chars: Vec<char> = text.chars().collect();
        let span: String = chars[parsed.source_span.start..parsed.source_span.end].iter().collect();
        assert_eq!(span, "{\"PIG\": 1}");
    }

    #[test]
    fn repairs_near_json() {
        assert_eq!(ok("{'PIG': 1, 'DRUS': 0,}").drus, Some(0));
        assert_eq!(ok(r#"{"advanced_amd": True}"#).advamd, Some(1));
    }

    #[test]
    fn nested_object() {
        let l = ok(r#"{"findings": {"ADVAMD": 0, "PIG": 1, "DRUS": 1}}"#);
        assert_eq!(l, PartialLabels { advamd: Some(0), pig: Some(1), drus: Some(1) });
    }

    #[test]
    fn canonical_round_trip() {
        for labels in ExamLabels::all_combinations() {
            assert_eq!(ok(&canonical_answer(&labels)), PartialLabels::from(labels));
        }
    }
}
