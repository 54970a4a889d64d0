//! Robust extraction of structured replies from raw backend text.
//!
//! Backends are instructed to answer with a single JSON document, but real
//! replies wrap it in prose. `extract_first_json` scans for the first
//! balanced object and the typed parsers validate fields and ranges,
//! coercing numeric strings ("0.80") to numbers.

use std::collections::BTreeSet;

use serde_json::Value;

use crate::model::{Stance, VerdictLabel};
use crate::Score;

/// Find the first balanced, parseable JSON object embedded in `raw`.
pub fn extract_first_json(raw: &str) -> Option<Value> {
    let bytes = raw.as_bytes();
    let mut start = None;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' if start.is_some() => in_string = true,
            b'{' => {
                if start.is_none() {
                    start = Some(i);
                }
                depth += 1;
            }
            b'}' if start.is_some() => {
                depth -= 1;
                if depth == 0 {
                    let candidate = &raw[start.unwrap()..=i];
                    if let Ok(value) = serde_json::from_str::<Value>(candidate) {
                        return Some(value);
                    }
                    // Not valid JSON after all; keep scanning.
                    start = None;
                }
            }
            _ => {}
        }
    }
    None
}

/// Number, or a string that parses as one.
pub fn coerce_number(value: &Value) -> Option<Score> {
    match value {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

pub fn coerce_integer(value: &Value) -> Option<i64> {
    match value {
        Value::Number(n) => n.as_i64().or_else(|| n.as_f64().map(|f| f as i64)),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn field<'a>(doc: &'a Value, name: &str) -> Result<&'a Value, String> {
    doc.get(name).ok_or_else(|| format!("missing field {name}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerReply {
    pub tool: String,
    pub args: std::collections::BTreeMap<String, String>,
}

pub fn parse_planner_reply(raw: &str) -> Result<PlannerReply, String> {
    let doc = extract_first_json(raw).ok_or("no JSON document in reply")?;
    let tool = field(&doc, "tool")?
        .as_str()
        .ok_or("tool is not a string")?
        .to_string();
    let mut args = std::collections::BTreeMap::new();
    if let Some(map) = doc.get("args").and_then(Value::as_object) {
        for (k, v) in map {
            let rendered = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            args.insert(k.clone(), rendered);
        }
    }
    Ok(PlannerReply { tool, args })
}

/// Coherence in [0, 1]; out-of-range replies are clamped.
pub fn parse_coherence_reply(raw: &str) -> Result<Score, String> {
    let doc = extract_first_json(raw).ok_or("no JSON document in reply")?;
    let value = coerce_number(field(&doc, "coherence")?).ok_or("coherence is not numeric")?;
    Ok(value.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StanceReply {
    pub stance: Stance,
    pub grade: i64,
}

/// A grade outside 1..=10 is a protocol violation, not a clampable value;
/// it is typed so the caller can surface it distinctly.
#[derive(Debug, Clone, PartialEq)]
pub enum StanceParseError {
    GradeOutOfRange(i64),
    Other(String),
}

impl std::fmt::Display for StanceParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StanceParseError::GradeOutOfRange(g) => write!(f, "grade {g} outside 1..=10"),
            StanceParseError::Other(msg) => write!(f, "{msg}"),
        }
    }
}

pub fn parse_stance_reply(raw: &str) -> Result<StanceReply, StanceParseError> {
    let doc = extract_first_json(raw)
        .ok_or_else(|| StanceParseError::Other("no JSON document in reply".into()))?;
    let stance = match field(&doc, "stance").map_err(StanceParseError::Other)?.as_str() {
        Some("REAL") => Stance::Real,
        Some("FAKE") => Stance::Fake,
        other => {
            return Err(StanceParseError::Other(format!(
                "stance {other:?} is not REAL or FAKE"
            )))
        }
    };
    let grade = field(&doc, "grade")
        .map_err(StanceParseError::Other)
        .and_then(|v| {
            coerce_integer(v).ok_or_else(|| StanceParseError::Other("grade is not an integer".into()))
        })?;
    if !(1..=10).contains(&grade) {
        return Err(StanceParseError::GradeOutOfRange(grade));
    }
    Ok(StanceReply { stance, grade })
}

pub fn parse_label(value: &Value) -> Result<VerdictLabel, String> {
    match value.as_str() {
        Some("REAL") => Ok(VerdictLabel::Real),
        Some("TEXT_FAKE") => Ok(VerdictLabel::TextFake),
        Some("IMAGE_FAKE") => Ok(VerdictLabel::ImageFake),
        Some("BOTH_FAKE") => Ok(VerdictLabel::BothFake),
        other => Err(format!("label {other:?} is not in the four-way space")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebateReply {
    pub label: VerdictLabel,
    pub confidence: Score,
    pub rationale: String,
    pub citations: BTreeSet<String>,
}

pub fn parse_debate_reply(raw: &str) -> Result<DebateReply, String> {
    let doc = extract_first_json(raw).ok_or("no JSON document in reply")?;
    let label = parse_label(field(&doc, "label")?)?;
    let confidence = coerce_number(field(&doc, "confidence")?).ok_or("confidence is not numeric")?;
    if !(0.0..=1.0).contains(&confidence) {
        return Err(format!("confidence {confidence} outside [0, 1]"));
    }
    let rationale = doc
        .get("rationale")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    let mut citations = BTreeSet::new();
    if let Some(list) = doc.get("citations").and_then(Value::as_array) {
        for item in list {
            if let Some(id) = item.as_str() {
                citations.insert(id.to_string());
            }
        }
    }
    Ok(DebateReply {
        label,
        confidence,
        rationale,
        citations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeReply {
    pub label: VerdictLabel,
    pub confidence: Score,
    pub override_flag: bool,
}

pub fn parse_judge_reply(raw: &str) -> Result<JudgeReply, String> {
    let doc = extract_first_json(raw).ok_or("no JSON document in reply")?;
    let label = parse_label(field(&doc, "label")?)?;
    let confidence = coerce_number(field(&doc, "confidence")?).ok_or("confidence is not numeric")?;
    if !(0.0..=1.0).contains(&confidence) {
        return Err(format!("confidence {confidence} outside [0, 1]"));
    }
    let override_flag = doc
        .get("override")
        .and_then(Value::as_bool)
        .unwrap_or(false);
    Ok(JudgeReply {
        label,
        confidence,
        override_flag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_document_embedded_in_prose() {
        let raw = "Sure! Here is my answer:\n{\"tool\": \"vqa_fixture\", \"args\": {\"q\": \"who\"}}\nHope that helps.";
        let reply = parse_planner_reply(raw).unwrap();
        assert_eq!(reply.tool, "vqa_fixture");
        assert_eq!(reply.args["q"], "who");
    }

    #[test]
    fn skips_unbalanced_brace_noise() {
        let raw = "weights {not json} then {\"coherence\": 0.4}";
        assert_eq!(parse_coherence_reply(raw).unwrap(), 0.4);
    }

    #[test]
    fn missing_field_is_a_parse_failure() {
        let raw = "{\"label\": \"REAL\"}";
        assert!(parse_debate_reply(raw).is_err());
    }

    #[test]
    fn numeric_strings_are_coerced() {
        let raw = "{\"label\": \"REAL\", \"confidence\": \"0.80\", \"rationale\": \"r\"}";
        let reply = parse_debate_reply(raw).unwrap();
        assert_eq!(reply.confidence, 0.80);
        let raw = "{\"stance\": \"REAL\", \"grade\": \"7\"}";
        assert_eq!(parse_stance_reply(raw).unwrap().grade, 7);
    }

    #[test]
    fn coherence_is_clamped() {
        assert_eq!(parse_coherence_reply("{\"coherence\": 1.2}").unwrap(), 1.0);
        assert_eq!(parse_coherence_reply("{\"coherence\": -0.2}").unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_grade_is_rejected() {
        assert_eq!(
            parse_stance_reply("{\"stance\": \"FAKE\", \"grade\": 11}"),
            Err(StanceParseError::GradeOutOfRange(11))
        );
        assert_eq!(
            parse_stance_reply("{\"stance\": \"FAKE\", \"grade\": 0}"),
            Err(StanceParseError::GradeOutOfRange(0))
        );
    }

    #[test]
    fn judge_reply_parses_with_optional_override() {
        let reply = parse_judge_reply("{\"label\": \"REAL\", \"confidence\": 0.9}").unwrap();
        assert!(!reply.override_flag);
        let reply =
            parse_judge_reply("{\"label\": \"BOTH_FAKE\", \"confidence\": 0.7, \"override\": true}")
                .unwrap();
        assert!(reply.override_flag);
    }

    #[test]
    fn braces_inside_strings_do_not_confuse_the_scanner() {
        let raw = "{\"tool\": \"corpus_search\", \"args\": {\"q\": \"a {weird} query\"}}";
        let reply = parse_planner_reply(raw).unwrap();
        assert_eq!(reply.args["q"], "a {weird} query");
    }
}
