//! Dataset schema, validation and JSON Lines (de)serialization.
//!
//! One [`QuestionRecord`] per line. Keys use the published attribute names
//! (`Q_ID`, `Question`, `Hints`, ...) in a fixed order; per-hint attributes
//! (`H_Popularity`, `Scores`, per-hint convergence/familiarity) are nested in
//! each hint object. Absent scores serialize as `null`, never `0`.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::text::question_word_count;

pub const MIN_QUESTION_WORDS: usize = 6;
pub const MAX_QUESTION_WORDS: usize = 20;
pub const DEFAULT_MIN_HINTS: usize = 5;
pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.72;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RecordError {
    #[error("line {line}: malformed JSON: {message}")]
    Parse { line: usize, message: String },

    #[error("{q_id}: invalid field {field}: {reason}")]
    Validation {
        q_id: String,
        field: String,
        reason: String,
    },

    #[error("duplicate Q_ID {0}")]
    DuplicateId(String),
}

fn invalid(q_id: &str, field: &str, reason: impl Into<String>) -> RecordError {
    RecordError::Validation {
        q_id: q_id.to_owned(),
        field: field.to_owned(),
        reason: reason.into(),
    }
}

/// Coarse question class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MajorType {
    Human,
    Entity,
    Location,
    Other,
    Description,
}

impl MajorType {
    pub const ALL: [MajorType; 5] = [
        MajorType::Human,
        MajorType::Entity,
        MajorType::Location,
        MajorType::Other,
        MajorType::Description,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MajorType::Human => "HUMAN",
            MajorType::Entity => "ENTITY",
            MajorType::Location => "LOCATION",
            MajorType::Other => "OTHER",
            MajorType::Description => "DESCRIPTION",
        }
    }
}

impl fmt::Display for MajorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MajorType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MajorType::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown major type {s:?}"))
    }
}

/// A named entity found in a hint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityMention {
    #[serde(rename = "Surface")]
    pub surface: String,
    #[serde(rename = "Wiki_Title")]
    pub wiki_title: Option<String>,
    /// Mean monthly page views before normalization.
    #[serde(rename = "Raw_Views")]
    pub raw_views: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hint {
    #[serde(rename = "Hint")]
    pub text: String,
    /// Bracket markers (1-based) into the record's `Hints_Sources`.
    #[serde(rename = "Sources", default)]
    pub source_indices: Vec<u32>,
    #[serde(rename = "Entities", default)]
    pub entities: Vec<EntityMention>,
    #[serde(rename = "H_Popularity", default)]
    pub h_popularity: Vec<f64>,
    /// Candidate-evaluator verdicts aligned with `Candidate_Answers`.
    #[serde(rename = "Scores", default)]
    pub candidate_verdicts: Vec<bool>,
    #[serde(rename = "Convergence", default)]
    pub hicos: Option<f64>,
    #[serde(rename = "Familiarity", default)]
    pub hifas: Option<f64>,
    #[serde(rename = "Leak", default)]
    pub leak_flag: bool,
    #[serde(rename = "Question_Similarity", default)]
    pub question_similarity: Option<f64>,
}

impl Hint {
    pub fn new(text: impl Into<String>) -> Self {
        Hint {
            text: text.into(),
            source_indices: Vec::new(),
            entities: Vec::new(),
            h_popularity: Vec::new(),
            candidate_verdicts: Vec::new(),
            hicos: None,
            hifas: None,
            leak_flag: false,
            question_similarity: None,
        }
    }
}

/// Input row before hint generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawQuestion {
    #[serde(rename = "Q_ID")]
    pub q_id: String,
    #[serde(rename = "Question")]
    pub question: String,
    #[serde(rename = "ExactAnswer")]
    pub exact_answer: String,
    #[serde(rename = "MajorType", default, skip_serializing_if = "Option::is_none")]
    pub major_type: Option<MajorType>,
    #[serde(rename = "MinorType", default, skip_serializing_if = "Option::is_none")]
    pub minor_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionRecord {
    #[serde(rename = "Q_ID")]
    pub q_id: String,
    #[serde(rename = "Question")]
    pub question: String,
    #[serde(rename = "Hints")]
    pub hints: Vec<Hint>,
    #[serde(rename = "Hints_Sources")]
    pub hints_sources: Vec<String>,
    #[serde(rename = "Snippet")]
    pub snippet: String,
    #[serde(rename = "Snippet_Sources")]
    pub snippet_sources: Vec<String>,
    #[serde(rename = "ExactAnswer")]
    pub exact_answer: String,
    #[serde(rename = "MajorType")]
    pub major_type: MajorType,
    #[serde(rename = "MinorType")]
    pub minor_type: String,
    #[serde(rename = "Candidate_Answers")]
    pub candidate_answers: Vec<String>,
    #[serde(rename = "Q_Popularity")]
    pub q_popularity: Vec<f64>,
    #[serde(rename = "Exact_Answer_Popularity")]
    pub exact_answer_popularity: Option<f64>,
    #[serde(rename = "Convergence")]
    pub convergence: Option<f64>,
    #[serde(rename = "Familiarity")]
    pub familiarity: Option<f64>,
}

const REQUIRED_KEYS: [&str; 11] = [
    "Q_ID",
    "Question",
    "Hints",
    "Hints_Sources",
    "Snippet",
    "Snippet_Sources",
    "ExactAnswer",
    "MajorType",
    "MinorType",
    "Candidate_Answers",
    "Q_Popularity",
];
const OPTIONAL_KEYS: [&str; 3] = ["Exact_Answer_Popularity", "Convergence", "Familiarity"];

fn check_unit(q_id: &str, field: &str, v: f64) -> Result<(), RecordError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(q_id, field, format!("{v} outside [0, 1]")))
    }
}

fn check_unit_opt(q_id: &str, field: &str, v: Option<f64>) -> Result<(), RecordError> {
    v.map_or(Ok(()), |v| check_unit(q_id, field, v))
}

impl QuestionRecord {
    /// Record-level invariants that hold at every stage after hint generation.
    pub fn validate(&self) -> Result<(), RecordError> {
        let id = self.q_id.as_str();
        if id.trim().is_empty() {
            return Err(invalid(id, "Q_ID", "empty"));
        }
        validate_question_text(id, &self.question)?;
        if self.hints.is_empty() {
            return Err(invalid(id, "Hints", "no hints"));
        }
        for (i, hint) in self.hints.iter().enumerate() {
            let field = |name: &str| format!("Hints[{i}].{name}");
            if hint.text.trim().is_empty() {
                return Err(invalid(id, &field("Hint"), "empty"));
            }
            if hint.h_popularity.len() != hint.entities.len() {
                return Err(invalid(
                    id,
                    &field("H_Popularity"),
                    format!(
                        "{} values for {} entities",
                        hint.h_popularity.len(),
                        hint.entities.len()
                    ),
                ));
            }
            for (e, ent) in hint.entities.iter().enumerate() {
                if !hint.text.contains(&ent.surface) || ent.surface.is_empty() {
                    return Err(invalid(
                        id,
                        &field(&format!("Entities[{e}]")),
                        format!("{:?} is not a span of the hint", ent.surface),
                    ));
                }
                if let Some(v) = ent.raw_views {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(invalid(id, &field("Raw_Views"), format!("{v}")));
                    }
                }
            }
            for &p in &hint.h_popularity {
                check_unit(id, &field("H_Popularity"), p)?;
            }
            if !hint.candidate_verdicts.is_empty()
                && hint.candidate_verdicts.len() != self.candidate_answers.len()
            {
                return Err(invalid(
                    id,
                    &field("Scores"),
                    format!(
                        "{} verdicts for {} candidates",
                        hint.candidate_verdicts.len(),
                        self.candidate_answers.len()
                    ),
                ));
            }
            check_unit_opt(id, &field("Convergence"), hint.hicos)?;
            check_unit_opt(id, &field("Familiarity"), hint.hifas)?;
            if let Some(s) = hint.question_similarity {
                if !(-1.0..=1.0).contains(&s) {
                    return Err(invalid(id, &field("Question_Similarity"), format!("{s}")));
                }
            }
        }
        for &p in &self.q_popularity {
            check_unit(id, "Q_Popularity", p)?;
        }
        check_unit_opt(id, "Exact_Answer_Popularity", self.exact_answer_popularity)?;
        check_unit_opt(id, "Convergence", self.convergence)?;
        check_unit_opt(id, "Familiarity", self.familiarity)?;
        Ok(())
    }

    /// Invariants required of records in a published dataset.
    pub fn validate_final(&self, rules: &FinalRules) -> Result<(), RecordError> {
        self.validate()?;
        let id = self.q_id.as_str();
        if self.major_type == MajorType::Description {
            return Err(invalid(
                id,
                "MajorType",
                "DESCRIPTION questions are excluded",
            ));
        }
        if self.hints.len() < rules.min_hints {
            return Err(invalid(
                id,
                "Hints",
                format!(
                    "{} hints, need at least {}",
                    self.hints.len(),
                    rules.min_hints
                ),
            ));
        }
        for (i, hint) in self.hints.iter().enumerate() {
            if hint.leak_flag {
                return Err(invalid(
                    id,
                    &format!("Hints[{i}].Leak"),
                    "leaking hint kept",
                ));
            }
            match hint.question_similarity {
                Some(s) if s < rules.similarity_threshold => {}
                other => {
                    return Err(invalid(
                        id,
                        &format!("Hints[{i}].Question_Similarity"),
                        format!("{other:?} not below {}", rules.similarity_threshold),
                    ))
                }
            }
        }
        Ok(())
    }

    /// Mean of the present per-hint values selected by `f`.
    pub fn mean_hint_score(&self, f: impl Fn(&Hint) -> Option<f64>) -> Option<f64> {
        let vals: Vec<f64> = self.hints.iter().filter_map(f).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalRules {
    pub min_hints: usize,
    pub similarity_threshold: f64,
}

impl Default for FinalRules {
    fn default() -> Self {
        FinalRules {
            min_hints: DEFAULT_MIN_HINTS,
            similarity_threshold: DEFAULT_SIMILARITY_THRESHOLD,
        }
    }
}

fn validate_question_text(q_id: &str, question: &str) -> Result<(), RecordError> {
    if !question.trim_end().ends_with('?') {
        return Err(invalid(q_id, "Question", "missing terminal '?'"));
    }
    let n = question_word_count(question);
    if !(MIN_QUESTION_WORDS..=MAX_QUESTION_WORDS).contains(&n) {
        return Err(invalid(
            q_id,
            "Question",
            format!("{n} words, expected {MIN_QUESTION_WORDS}..={MAX_QUESTION_WORDS}"),
        ));
    }
    Ok(())
}

/// Parses one JSONL line. `line` is 1-based and only used for messages.
pub fn parse_record(json_line: &str, line: usize) -> Result<QuestionRecord, RecordError> {
    let value: Value = serde_json::from_str(json_line).map_err(|e| RecordError::Parse {
        line,
        message: e.to_string(),
    })?;
    let Value::Object(mut obj) = value else {
        return Err(RecordError::Parse {
            line,
            message: "expected a JSON object".into(),
        });
    };
    let q_id = obj
        .get("Q_ID")
        .and_then(Value::as_str)
        .unwrap_or("<unknown>")
        .to_owned();
    for key in obj.keys() {
        if !REQUIRED_KEYS.contains(&key.as_str()) && !OPTIONAL_KEYS.contains(&key.as_str()) {
            return Err(invalid(&q_id, key, "unknown field"));
        }
    }
    for key in REQUIRED_KEYS {
        if !obj.contains_key(key) {
            return Err(invalid(&q_id, key, "missing required field"));
        }
    }
    for key in OPTIONAL_KEYS {
        obj.entry(key).or_insert(Value::Null);
    }
    let record: QuestionRecord = serde_json::from_value(Value::Object(obj))
        .map_err(|e| invalid(&q_id, "record", e.to_string()))?;
    record.validate()?;
    Ok(record)
}

pub fn serialize_record(record: &QuestionRecord) -> Result<String, RecordError> {
    record.validate()?;
    serde_json::to_string(record).map_err(|e| invalid(&record.q_id, "record", e.to_string()))
}

/// Parses a whole JSONL document, rejecting duplicate ids.
pub fn parse_dataset(text: &str) -> Result<Vec<QuestionRecord>, RecordError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(line, i + 1)?;
        if !seen.insert(rec.q_id.clone()) {
            return Err(RecordError::DuplicateId(rec.q_id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn serialize_dataset(records: &[QuestionRecord]) -> Result<String, RecordError> {
    let mut seen = HashSet::new();
    let mut out = String::new();
    for r in records {
        if !seen.insert(r.q_id.as_str()) {
            return Err(RecordError::DuplicateId(r.q_id.clone()));
        }
        out.push_str(&serialize_record(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Vec<QuestionRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_dataset(&text)?)
}

pub fn write_dataset(path: &Path, records: &[QuestionRecord]) -> Result<()> {
    let text = serialize_dataset(records)?;
    crate::jsonl::write_atomic(path, text.as_bytes())
}

/// Accepts a JSON object line with keys in arbitrary order and re-emits the
/// schema's order, for checking golden files.
pub fn canonicalize_line(line: &str) -> Result<String, RecordError> {
    serialize_record(&parse_record(line, 1)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<QuestionRecord>,
    pub validation: Vec<QuestionRecord>,
    pub test: Vec<QuestionRecord>,
    pub seed: u64,
}

/// Seeded random partition into train/validation/test of the given sizes.
/// Each part keeps the input's relative order.
pub fn split_dataset(
    records: Vec<QuestionRecord>,
    counts: (usize, usize, usize),
    seed: u64,
) -> Result<DatasetSplit> {
    let (n_train, n_val, n_test) = counts;
    if n_train + n_val + n_test != records.len() {
        return Err(Error::invalid(format!(
            "split counts {n_train}+{n_val}+{n_test} do not sum to {} records",
            records.len()
        )));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut bucket = vec![0u8; records.len()];
    for &i in &order[n_train..n_train + n_val] {
        bucket[i] = 1;
    }
    for &i in &order[n_train + n_val..] {
        bucket[i] = 2;
    }
    let mut split = DatasetSplit {
        train: Vec::with_capacity(n_train),
        validation: Vec::with_capacity(n_val),
        test: Vec::with_capacity(n_test),
        seed,
    };
    for (rec, b) in records.into_iter().zip(bucket) {
        match b {
            0 => split.train.push(rec),
            1 => split.validation.push(rec),
            _ => split.test.push(rec),
        }
    }
    Ok(split)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn sample_record(q_id: &str, n_hints: usize) -> QuestionRecord {
        let hints = (0..n_hints)
            .map(|i| {
                let mut h = Hint::new(format!("Clue number {i} mentions Paris somewhere."));
                h.source_indices = vec![1];
                h.entities = vec![EntityMention {
                    surface: "Paris".into(),
                    wiki_title: Some("Paris".into()),
                    raw_views: Some(1234.5),
                }];
                h.h_popularity = vec![0.25];
                h.candidate_verdicts = vec![true, false];
                h.hicos = Some(0.5);
                h.hifas = Some(0.25);
                h.question_similarity = Some(0.31);
                h
            })
            .collect();
        QuestionRecord {
            q_id: q_id.into(),
            question: "In which city are the headquarters of the IMF?".into(),
            hints,
            hints_sources: vec!["https://example.org/a".into()],
            snippet: "The IMF is headquartered in Washington, D.C.".into(),
            snippet_sources: vec!["https://example.org/b".into()],
            exact_answer: "Washington, D.C.".into(),
            major_type: MajorType::Location,
            minor_type: "LOC:city".into(),
            candidate_answers: vec!["Washington, D.C.".into(), "Paris".into()],
            q_popularity: vec![0.4],
            exact_answer_popularity: Some(0.9),
            convergence: Some(0.54),
            familiarity: None,
        }
    }

    #[test]
    fn round_trip_ten_hints() {
        let rec = sample_record("tc_1", 10);
        let line = serialize_record(&rec).unwrap();
        let back = parse_record(&line, 1).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.hints.len(), 10);
        assert_eq!(back.convergence, Some(0.54));
    }

    #[test]
    fn keys_follow_schema_order_and_absent_is_null() {
        let line = serialize_record(&sample_record("tc_1", 1)).unwrap();
        let order = [
            "\"Q_ID\"",
            "\"Question\"",
            "\"Hints\"",
            "\"Hints_Sources\"",
            "\"Snippet\"",
            "\"Snippet_Sources\"",
            "\"ExactAnswer\"",
            "\"MajorType\"",
            "\"MinorType\"",
            "\"Candidate_Answers\"",
            "\"Q_Popularity\"",
            "\"Exact_Answer_Popularity\"",
        ];
        let positions: Vec<usize> = order.iter().map(|k| line.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(line.ends_with("\"Convergence\":0.54,\"Familiarity\":null}"));
    }

    #[test]
    fn missing_question_is_validation_error() {
        let mut v: Value = serde_json::to_value(sample_record("tc_1", 5)).unwrap();
        v.as_object_mut().unwrap().remove("Question");
        let err = parse_record(&v.to_string(), 3).unwrap_err();
        assert!(
            matches!(err, RecordError::Validation { ref field, .. } if field == "Question"),
            "{err}"
        );
    }

    #[test]
    fn missing_optional_scores_are_absent() {
        let mut v: Value = serde_json::to_value(sample_record("tc_1", 5)).unwrap();
        let obj = v.as_object_mut().unwrap();
        obj.remove("Convergence");
        obj.remove("Familiarity");
        let rec = parse_record(&v.to_string(), 1).unwrap();
        assert_eq!(rec.convergence, None);
        assert_eq!(rec.familiarity, None);
    }

    #[test]
    fn question_without_mark_rejected() {
        let mut rec = sample_record("tc_1", 5);
        rec.question = "Name five oceans".into();
        let line = serde_json::to_string(&rec).unwrap();
        let err = parse_record(&line, 1).unwrap_err();
        assert!(matches!(err, RecordError::Validation { ref field, .. } if field == "Question"));
    }

    #[test]
    fn unknown_field_rejected() {
        let mut v: Value = serde_json::to_value(sample_record("tc_1", 5)).unwrap();
        v.as_object_mut()
            .unwrap()
            .insert("Extra".into(), Value::Bool(true));
        let err = parse_record(&v.to_string(), 1).unwrap_err();
        assert!(matches!(err, RecordError::Validation { ref field, .. } if field == "Extra"));
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = parse_record("{\"Q_ID\": ", 7).unwrap_err();
        assert!(matches!(err, RecordError::Parse { line: 7, .. }));
        assert!(parse_record("[1,2]", 2).is_err());
    }

    #[test]
    fn empty_hints_refused_on_serialize() {
        let rec = sample_record("tc_1", 0);
        assert!(serialize_record(&rec).is_err());
    }

    #[test]
    fn out_of_range_popularity_rejected() {
        let mut rec = sample_record("tc_1", 5);
        rec.q_popularity = vec![1.5];
        assert!(rec.validate().is_err());
        let mut rec = sample_record("tc_1", 5);
        rec.hints[0].h_popularity.push(0.1);
        assert!(rec.validate().is_err());
    }

    #[test]
    fn final_rules() {
        let rules = FinalRules::default();
        assert!(sample_record("a", 5).validate_final(&rules).is_ok());
        assert!(sample_record("a", 4).validate_final(&rules).is_err());
        let mut rec = sample_record("a", 5);
        rec.hints[2].leak_flag = true;
        assert!(rec.validate_final(&rules).is_err());
        let mut rec = sample_record("a", 5);
        rec.hints[2].question_similarity = Some(0.72);
        assert!(rec.validate_final(&rules).is_err());
        let mut rec = sample_record("a", 5);
        rec.major_type = MajorType::Description;
        assert!(rec.validate_final(&rules).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = sample_record("x", 5);
        assert!(matches!(
            serialize_dataset(&[a.clone(), a]),
            Err(RecordError::DuplicateId(_))
        ));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let recs: Vec<_> = (0..30)
            .map(|i| sample_record(&format!("q{i}"), 5))
            .collect();
        let a = split_dataset(recs.clone(), (20, 5, 5), 9).unwrap();
        let b = split_dataset(recs.clone(), (20, 5, 5), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            (a.train.len(), a.validation.len(), a.test.len()),
            (20, 5, 5)
        );
        let all = split_dataset(recs.clone(), (30, 0, 0), 1).unwrap();
        assert_eq!(all.train, recs);
        assert!(split_dataset(recs, (10, 10, 5), 1).is_err());
    }
}
