//! Domain records shared by every pipeline stage.
//!
//! Items travel between stages as line-delimited JSON with the fields
//! `id`, `group_id`, `question`, `context`, `gold_answers`, `label` and
//! `source`. Unrecognised fields on input are carried through untouched.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Whether the paired context supports a specific answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Known,
    Unknown,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Known => f.write_str("known"),
            Label::Unknown => f.write_str("unknown"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Asqa,
    Hotpotqa,
    #[default]
    Other,
}

/// Grading outcome of a single model response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseClass {
    Correct,
    Wrong,
    Rejected,
    Hallucinated,
}

impl ResponseClass {
    /// Rejected applies to both labels, Correct/Wrong only to known items,
    /// Hallucinated only to unknown items.
    pub fn admissible_for(self, label: Label) -> bool {
        match self {
            ResponseClass::Rejected => true,
            ResponseClass::Correct | ResponseClass::Wrong => label == Label::Known,
            ResponseClass::Hallucinated => label == Label::Unknown,
        }
    }
}

/// Sufficiency tag parsed from the end of a postfix-template response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostfixTag {
    Sufficient,
    Insufficient,
    Missing,
}

impl PostfixTag {
    /// The tag a well-calibrated model should emit for `label`.
    pub fn expected_for(label: Label) -> PostfixTag {
        match label {
            Label::Known => PostfixTag::Sufficient,
            Label::Unknown => PostfixTag::Insufficient,
        }
    }
}

/// One benchmark or tuning item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualQA {
    pub id: String,
    pub group_id: String,
    pub question: String,
    pub context: String,
    pub gold_answers: BTreeSet<String>,
    pub label: Label,
    pub source: Source,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ContextualQA {
    /// Builds an item whose id is derived from its content.
    pub fn new(
        group_id: impl Into<String>,
        question: impl Into<String>,
        context: impl Into<String>,
        gold_answers: impl IntoIterator<Item = String>,
        label: Label,
        source: Source,
    ) -> Self {
        let group_id = group_id.into();
        let question = question.into();
        let context = context.into();
        ContextualQA {
            id: content_id(&group_id, &question, &context),
            group_id,
            question,
            context,
            gold_answers: gold_answers.into_iter().collect(),
            label,
            source,
            extra: Map::new(),
        }
    }
}

/// Deterministic id for a (group, question, context) triple.
pub fn content_id(group_id: &str, question: &str, context: &str) -> String {
    let mut hasher = Sha256::new();
    for part in [group_id, question, context] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hex::encode(&hasher.finalize()[..8])
}

/// A broken invariant of [`ContextualQA`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    KnownWithoutGold,
    UnknownWithGold,
    EmptyQuestion,
    EmptyContext,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            Violation::KnownWithoutGold => "Known requires gold answers",
            Violation::UnknownWithGold => "Unknown forbids gold answers",
            Violation::EmptyQuestion => "question is empty",
            Violation::EmptyContext => "context is empty",
        };
        f.write_str(msg)
    }
}

/// Returns every violated invariant; an empty list means the item is valid.
pub fn validate_item(item: &ContextualQA) -> Vec<Violation> {
    let mut out = Vec::new();
    match item.label {
        Label::Known if item.gold_answers.is_empty() => out.push(Violation::KnownWithoutGold),
        Label::Unknown if !item.gold_answers.is_empty() => out.push(Violation::UnknownWithGold),
        _ => {}
    }
    if item.question.trim().is_empty() {
        out.push(Violation::EmptyQuestion);
    }
    if item.context.trim().is_empty() {
        out.push(Violation::EmptyContext);
    }
    out
}

/// An ambiguous parent question split into (question, context, gold) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SubQuestionGroup {
    pub group_id: String,
    pub source: Source,
    pub pairs: Vec<SubQuestion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubQuestion {
    pub question: String,
    pub context: String,
    pub gold_answers: BTreeSet<String>,
}

/// One line of a group input file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupRow {
    pub group_id: String,
    pub question: String,
    pub context: String,
    pub gold_answers: BTreeSet<String>,
    #[serde(default)]
    pub source: Source,
}

/// Collects rows into groups, keeping first-appearance order of groups and
/// file order of pairs within each group.
pub fn group_rows(rows: impl IntoIterator<Item = GroupRow>) -> Vec<SubQuestionGroup> {
    let mut groups: Vec<SubQuestionGroup> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for row in rows {
        let slot = *index.entry(row.group_id.clone()).or_insert_with(|| {
            groups.push(SubQuestionGroup {
                group_id: row.group_id.clone(),
                source: row.source,
                pairs: Vec::new(),
            });
            groups.len() - 1
        });
        groups[slot].pairs.push(SubQuestion {
            question: row.question,
            context: row.context,
            gold_answers: row.gold_answers,
        });
    }
    groups
}

/// Parses one JSON object per non-blank line.
pub fn read_jsonl<T, R>(reader: R) -> Result<Vec<T>, RecordError>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| RecordError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T, W>(mut writer: W, records: &[T]) -> Result<(), RecordError>
where
    T: Serialize,
    W: Write,
{
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn parse_record(line: &str) -> Result<ContextualQA, RecordError> {
    serde_json::from_str(line).map_err(|e| RecordError::Parse {
        line: 1,
        message: e.to_string(),
    })
}

pub fn emit_record(item: &ContextualQA) -> Result<String, RecordError> {
    Ok(serde_json::to_string(item)?)
}

/// Serializes and re-parses an item.
pub fn roundtrip_record(item: &ContextualQA) -> Result<ContextualQA, RecordError> {
    parse_record(&emit_record(item)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn photoelectric() -> ContextualQA {
        ContextualQA::new(
            "g-photo",
            "Who discovered the photoelectric effect in 1887?",
            "The photoelectric effect was discovered by Heinrich Hertz and Wilhelm Hallwachs in 1887.",
            ["Heinrich Hertz".to_string(), "Wilhelm Hallwachs".to_string()],
            Label::Known,
            Source::Asqa,
        )
    }

    #[test]
    fn known_item_with_golds_is_valid() {
        assert!(validate_item(&photoelectric()).is_empty());
    }

    #[test]
    fn known_without_gold() {
        let mut item = photoelectric();
        item.gold_answers.clear();
        let v = validate_item(&item);
        assert_eq!(v, vec![Violation::KnownWithoutGold]);
        assert_eq!(v[0].to_string(), "Known requires gold answers");
    }

    #[test]
    fn unknown_with_gold() {
        let mut item = photoelectric();
        item.label = Label::Unknown;
        item.gold_answers = ["1887".to_string()].into();
        let v = validate_item(&item);
        assert_eq!(v, vec![Violation::UnknownWithGold]);
        assert_eq!(v[0].to_string(), "Unknown forbids gold answers");
    }

    #[test]
    fn blank_text_is_reported() {
        let mut item = photoelectric();
        item.question = "  \t".into();
        item.context = String::new();
        assert_eq!(
            validate_item(&item),
            vec![Violation::EmptyQuestion, Violation::EmptyContext]
        );
    }

    #[test]
    fn ids_are_content_hashes() {
        let a = photoelectric();
        let b = photoelectric();
        assert_eq!(a.id, b.id);
        assert_eq!(a.id.len(), 16);
        assert_ne!(content_id("g", "ab", "c"), content_id("g", "a", "bc"));
    }

    #[test]
    fn wire_schema_field_names() {
        let line = emit_record(&photoelectric()).unwrap();
        let v: Value = serde_json::from_str(&line).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            keys,
            ["id", "group_id", "question", "context", "gold_answers", "label", "source"]
        );
        assert_eq!(v["label"], "known");
        assert_eq!(v["source"], "asqa");
    }

    #[test]
    fn missing_field_names_it() {
        let line = r#"{"id":"x","group_id":"g","context":"c","gold_answers":[],"label":"unknown","source":"other"}"#;
        let err = parse_record(line).unwrap_err().to_string();
        assert!(err.contains("question"), "{err}");
    }

    #[test]
    fn extra_fields_survive() {
        let line = r#"{"id":"x","group_id":"g","question":"q","context":"c","gold_answers":["a"],"label":"known","source":"other","note":{"k":[1,2]}}"#;
        let item = parse_record(line).unwrap();
        let back = emit_record(&item).unwrap();
        let v: Value = serde_json::from_str(&back).unwrap();
        assert_eq!(v["note"], serde_json::json!({"k": [1, 2]}));
    }

    #[test]
    fn parse_error_carries_line_number() {
        let input = format!("{}\n\n{{not json\n", emit_record(&photoelectric()).unwrap());
        let err = read_jsonl::<ContextualQA, _>(input.as_bytes()).unwrap_err();
        match err {
            RecordError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn class_admissibility() {
        use ResponseClass::*;
        assert!(Rejected.admissible_for(Label::Known));
        assert!(Rejected.admissible_for(Label::Unknown));
        assert!(Correct.admissible_for(Label::Known));
        assert!(!Correct.admissible_for(Label::Unknown));
        assert!(!Wrong.admissible_for(Label::Unknown));
        assert!(Hallucinated.admissible_for(Label::Unknown));
        assert!(!Hallucinated.admissible_for(Label::Known));
    }

    #[test]
    fn rows_group_in_first_appearance_order() {
        let row = |g: &str, q: &str| GroupRow {
            group_id: g.into(),
            question: q.into(),
            context: format!("ctx {q}"),
            gold_answers: ["x".to_string()].into(),
            source: Source::Asqa,
        };
        let groups = group_rows(vec![row("b", "1"), row("a", "2"), row("b", "3")]);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].group_id, "b");
        assert_eq!(groups[0].pairs.len(), 2);
        assert_eq!(groups[0].pairs[1].question, "3");
    }
}
