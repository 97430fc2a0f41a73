//! Turning generator output into an ordered list of turns.

use std::sync::LazyLock;

use regex::Regex;
use serde_json::Value;

use super::{Speaker, Turn};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TranscriptError {
    #[error("no dialogue turns found")]
    NoTurns,
    #[error("unknown speaker role `{0}`")]
    UnknownRole(String),
    #[error("turn {0} has no text")]
    MissingText(usize),
}

fn speaker(role: &str) -> Result<Speaker, TranscriptError> {
    match role.trim().to_ascii_lowercase().as_str() {
        "human" | "patient" | "user" => Ok(Speaker::Human),
        "gpt" | "doctor" | "assistant" | "physician" => Ok(Speaker::Gpt),
        other => Err(TranscriptError::UnknownRole(other.to_string())),
    }
}

fn turn_from_object(i: usize, v: &Value) -> Result<Turn, TranscriptError> {
    let obj = v.as_object().ok_or(TranscriptError::MissingText(i))?;
    let role = ["role", "from", "speaker"]
        .iter()
        .find_map(|k| obj.get(*k).and_then(Value::as_str))
        .ok_or(TranscriptError::MissingText(i))?;
    let text = ["text", "value", "content"]
        .iter()
        .find_map(|k| obj.get(*k))
        .ok_or(TranscriptError::MissingText(i))?;
    let text = match text {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    Ok(Turn { speaker: speaker(role)?, text })
}

fn turns_from_value(v: &Value) -> Option<Result<Vec<Turn>, TranscriptError>> {
    let arr = match v {
        Value::Array(a) => a,
        Value::Object(o) => o.get("conversations").and_then(Value::as_array)?,
        _ => return None,
    };
    if arr.is_empty() || !arr.iter().all(Value::is_object) {
        return None;
    }
    Some(arr.iter().enumerate().map(|(i, t)| turn_from_object(i, t)).collect())
}

fn strip_fences(raw: &str) -> &str {
    let t = raw.trim();
    let t = t.strip_prefix("```json").or_else(|| t.strip_prefix("```")).unwrap_or(t);
    t.strip_suffix("```").unwrap_or(t).trim()
}

fn json_candidates(text: &str) -> Vec<&str> {
    let mut out = vec![text];
    for (open, close) in [('[', ']'), ('{', '}')] {
        if let (Some(s), Some(e)) = (text.find(open), text.rfind(close)) {
            if s < e {
                out.push(&text[s..=e]);
            }
        }
    }
    out
}

static PSEUDO_TURN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#""(from|role)"\s*:\s*"([A-Za-z]+)"\s*,\s*"(value|text)"\s*:\s*"((?:[^"\\]|\\.)*)""#).unwrap()
});

static LINE_BREAK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[ \t]*\r?\n[ \t]*").unwrap());

fn unescape(inner: &str) -> String {
    let flat = LINE_BREAK.replace_all(inner, " ");
    serde_json::from_str::<String>(&format!("\"{flat}\"")).unwrap_or_else(|_| flat.into_owned())
}

/// Parses generator output into turns.
///
/// Accepts a JSON array of `{role, text}` or `{from, value}` objects, an
/// object with a `conversations` array, or the unbracketed
/// `"from": ..., "value": ...` listing used in stored examples.
pub fn parse_turns(raw: &str) -> Result<Vec<Turn>, TranscriptError> {
    let text = strip_fences(raw);
    for candidate in json_candidates(text) {
        if let Ok(v) = serde_json::from_str::<Value>(candidate) {
            if let Some(turns) = turns_from_value(&v) {
                return turns;
            }
        }
    }
    let turns: Vec<Turn> = PSEUDO_TURN
        .captures_iter(text)
        .map(|c| Ok(Turn { speaker: speaker(&c[2])?, text: unescape(&c[4]) }))
        .collect::<Result<_, TranscriptError>>()?;
    if turns.is_empty() {
        return Err(TranscriptError::NoTurns);
    }
    Ok(turns)
}
