use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::generation::SUM_TOLERANCE;
use crate::index::SentenceIndex;
use crate::jsonl::{self, SCHEMA_VERSION};

/// Record files the schema checker understands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaKind {
    Sentences,
    Ppl,
    Responses,
    Styles,
    Offense,
}

impl SchemaKind {
    pub const ALL: [SchemaKind; 5] = [
        SchemaKind::Sentences,
        SchemaKind::Ppl,
        SchemaKind::Responses,
        SchemaKind::Styles,
        SchemaKind::Offense,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemaKind::Sentences => "sentences",
            SchemaKind::Ppl => "ppl",
            SchemaKind::Responses => "responses",
            SchemaKind::Styles => "styles",
            SchemaKind::Offense => "offense",
        }
    }

    fn id_field(self) -> &'static str {
        match self {
            SchemaKind::Sentences => "id",
            SchemaKind::Ppl => "sentence_id",
            SchemaKind::Responses | SchemaKind::Styles => "response_id",
            SchemaKind::Offense => "id",
        }
    }
}

impl fmt::Display for SchemaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemaKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown schema kind {s:?}")))
    }
}

/// Files the checked records may refer to. Checks needing a missing
/// piece are skipped.
#[derive(Clone, Copy, Debug, Default)]
pub struct SchemaContext<'a> {
    pub sentences: Option<&'a SentenceIndex>,
    pub response_ids: Option<&'a HashSet<String>>,
    pub style_count: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SchemaViolation {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SchemaReport {
    pub kind: SchemaKind,
    pub records: usize,
    pub violations: Vec<SchemaViolation>,
}

impl SchemaReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn string_field<'v>(obj: &'v Map<String, Value>, name: &str, problems: &mut Vec<String>) -> Option<&'v str> {
    match obj.get(name) {
        Some(Value::String(s)) if !s.is_empty() => Some(s),
        Some(Value::String(_)) => {
            problems.push(format!("field {name:?} is empty"));
            None
        }
        Some(_) => {
            problems.push(format!("field {name:?} must be a string"));
            None
        }
        None => {
            problems.push(format!("missing field {name:?}"));
            None
        }
    }
}

fn number_field(obj: &Map<String, Value>, name: &str, problems: &mut Vec<String>) -> Option<f64> {
    match obj.get(name) {
        Some(v) => match v.as_f64() {
            Some(x) => Some(x),
            None => {
                problems.push(format!("field {name:?} must be a number"));
                None
            }
        },
        None => {
            problems.push(format!("missing field {name:?}"));
            None
        }
    }
}

fn check_record(kind: SchemaKind, obj: &Map<String, Value>, ctx: &SchemaContext<'_>, problems: &mut Vec<String>) {
    let known_sentence = |id: &str| ctx.sentences.is_none_or(|s| s.get(id).is_some());
    let known_response = |id: &str| ctx.response_ids.is_none_or(|r| r.contains(id));
    match kind {
        SchemaKind::Sentences => {
            for f in ["id", "text", "descriptor_text", "axis", "template_id", "noun_singular"] {
                string_field(obj, f, problems);
            }
            if let Err(e) = serde_json::from_value::<crate::compiler::SentenceRecord>(Value::Object(obj.clone())) {
                problems.push(e.to_string());
            }
        }
        SchemaKind::Ppl => {
            if let Some(id) = string_field(obj, "sentence_id", problems) {
                if !known_sentence(id) {
                    problems.push(format!("unknown sentence_id {id:?}"));
                }
            }
            if let Some(p) = number_field(obj, "perplexity", problems) {
                if !(p > 0.0 && p.is_finite()) {
                    problems.push(format!("perplexity {p} must be positive and finite"));
                }
            }
        }
        SchemaKind::Responses => {
            string_field(obj, "response_id", problems);
            if let Some(id) = string_field(obj, "sentence_id", problems) {
                if !known_sentence(id) {
                    problems.push(format!("unknown sentence_id {id:?}"));
                }
            }
            if !matches!(obj.get("text"), Some(Value::String(_))) {
                problems.push("field \"text\" must be a string".into());
            }
            if !matches!(obj.get("context"), None | Some(Value::String(_))) {
                problems.push("field \"context\" must be a string".into());
            }
        }
        SchemaKind::Styles => {
            if let Some(id) = string_field(obj, "response_id", problems) {
                if !known_response(id) {
                    problems.push(format!("unknown response_id {id:?}"));
                }
            }
            match obj.get("probs") {
                Some(Value::Array(items)) => {
                    let probs: Vec<Option<f64>> = items.iter().map(Value::as_f64).collect();
                    if probs.iter().any(Option::is_none) {
                        problems.push("probs must all be numbers".into());
                        return;
                    }
                    let probs: Vec<f64> = probs.into_iter().flatten().collect();
                    if let Some(s) = ctx.style_count {
                        if probs.len() != s {
                            problems.push(format!("probs has {} entries, manifest has {s}", probs.len()));
                        }
                    }
                    for (i, p) in probs.iter().enumerate() {
                        if !(0.0..=1.0).contains(p) {
                            problems.push(format!("probs[{i}] = {p} outside [0, 1]"));
                        }
                    }
                    let sum: f64 = probs.iter().sum();
                    if (sum - 1.0).abs() > SUM_TOLERANCE {
                        problems.push(format!("probs sum to {sum}, not 1"));
                    }
                }
                Some(_) => problems.push("field \"probs\" must be an array".into()),
                None => problems.push("missing field \"probs\"".into()),
            }
        }
        SchemaKind::Offense => {
            if let Some(id) = string_field(obj, "id", problems) {
                let resolvable = match (ctx.sentences, ctx.response_ids) {
                    (None, None) => true,
                    (s, r) => s.is_some_and(|s| s.get(id).is_some()) || r.is_some_and(|r| r.contains(id)),
                };
                if !resolvable {
                    problems.push(format!("unknown id {id:?}"));
                }
            }
            if let Some(p) = number_field(obj, "prob_offensive", problems) {
                if !(0.0..=1.0).contains(&p) {
                    problems.push(format!("prob_offensive {p} outside [0, 1]"));
                }
            }
        }
    }
}

/// Check every line of a record file. Never fails on bad content; all
/// problems land in the report with their line numbers.
pub fn validate_schema<R: BufRead>(reader: R, kind: SchemaKind, ctx: &SchemaContext<'_>) -> Result<SchemaReport> {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    let mut records = 0;
    jsonl::for_each_line(reader, |line_no, line| {
        records += 1;
        let mut problems = Vec::new();
        match serde_json::from_str::<Value>(line) {
            Ok(Value::Object(obj)) => {
                match obj.get("schema_version") {
                    None => {}
                    Some(v) if v.as_u64() == Some(SCHEMA_VERSION as u64) => {}
                    Some(v) => problems.push(format!("unsupported schema_version {v}")),
                }
                check_record(kind, &obj, ctx, &mut problems);
                if let Some(Value::String(id)) = obj.get(kind.id_field()) {
                    if !seen.insert(id.clone()) {
                        problems.push(format!("duplicate {} {id:?}", kind.id_field()));
                    }
                }
            }
            Ok(_) => problems.push("record must be a JSON object".into()),
            Err(e) => problems.push(format!("invalid JSON: {e}")),
        }
        violations.extend(
            problems
                .into_iter()
                .map(|message| SchemaViolation { line: line_no, message }),
        );
        Ok(())
    })?;
    Ok(SchemaReport {
        kind,
        records,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile_dataset, VariationPolicy};
    use crate::registry::Registry;

    fn index() -> (SentenceIndex, String) {
        let reg = Registry::shipped();
        let recs: Vec<_> = compile_dataset(&reg, VariationPolicy::None)
            .unwrap()
            .take(3)
            .map(Result::unwrap)
            .collect();
        let id = recs[0].id.clone();
        (SentenceIndex::from_records(&recs).unwrap(), id)
    }

    #[test]
    fn clean_ppl_file() {
        let (idx, id) = index();
        let text = format!("{{\"schema_version\":1,\"sentence_id\":\"{id}\",\"perplexity\":12.5}}\n");
        let ctx = SchemaContext {
            sentences: Some(&idx),
            ..Default::default()
        };
        let r = validate_schema(text.as_bytes(), SchemaKind::Ppl, &ctx).unwrap();
        assert!(r.is_clean(), "{:?}", r.violations);
        assert_eq!(r.records, 1);
    }

    #[test]
    fn negative_style_entry_is_flagged_at_its_line() {
        let text = "{\"response_id\":\"a\",\"probs\":[0.5,0.5]}\n{\"response_id\":\"b\",\"probs\":[1.2,-0.2]}\n";
        let r = validate_schema(text.as_bytes(), SchemaKind::Styles, &SchemaContext::default()).unwrap();
        assert!(!r.violations.is_empty());
        assert!(r.violations.iter().all(|v| v.line == 2));
        assert!(r.violations.iter().any(|v| v.message.contains("-0.2")));
    }

    #[test]
    fn dangling_response_reference() {
        let (idx, id) = index();
        let text = format!(
            "{{\"response_id\":\"r1\",\"sentence_id\":\"{id}\",\"text\":\"ok\"}}\n\
             {{\"response_id\":\"r2\",\"sentence_id\":\"nope\",\"text\":\"ok\"}}\n\
             {{\"response_id\":\"r2\",\"sentence_id\":\"{id}\",\"text\":\"ok\"}}\n"
        );
        let ctx = SchemaContext {
            sentences: Some(&idx),
            ..Default::default()
        };
        let r = validate_schema(text.as_bytes(), SchemaKind::Responses, &ctx).unwrap();
        let lines: Vec<usize> = r.violations.iter().map(|v| v.line).collect();
        assert_eq!(lines, vec![2, 3]);
        assert!(r.violations[0].message.contains("unknown sentence_id"));
        assert!(r.violations[1].message.contains("duplicate"));
    }

    #[test]
    fn malformed_lines() {
        let text = "not json\n[1]\n{\"schema_version\":2,\"id\":\"x\",\"prob_offensive\":0.1}\n{\"id\":\"y\"}\n";
        let r = validate_schema(text.as_bytes(), SchemaKind::Offense, &SchemaContext::default()).unwrap();
        let lines: Vec<usize> = r.violations.iter().map(|v| v.line).collect();
        assert_eq!(lines, vec![1, 2, 3, 4]);
        let sized = SchemaContext {
            style_count: Some(3),
            ..Default::default()
        };
        let r = validate_schema(
            &b"{\"response_id\":\"a\",\"probs\":[0.5,0.5]}"[..],
            SchemaKind::Styles,
            &sized,
        )
        .unwrap();
        assert_eq!(r.violations.len(), 1);
    }
}
