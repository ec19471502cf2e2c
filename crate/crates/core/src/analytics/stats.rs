//! Dataset-level aggregates.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::QuestionRecord;
use crate::text::{question_word_count, word_count};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_questions: usize,
    pub n_hints: usize,
    /// Words per question.
    pub avg_question_len: f64,
    /// Words per hint, over all hints.
    pub avg_hint_len: f64,
    pub avg_hints_per_q: f64,
    /// Entities found in the question text (`Q_Popularity` entries).
    pub avg_entities_per_q: f64,
    pub avg_entities_per_hint: f64,
    /// Distinct URLs across `Snippet_Sources` and `Hints_Sources`.
    pub avg_sources_per_q: f64,
}

pub fn distinct_sources(record: &QuestionRecord) -> usize {
    record
        .snippet_sources
        .iter()
        .chain(&record.hints_sources)
        .collect::<BTreeSet<_>>()
        .len()
}

pub fn dataset_stats(records: &[QuestionRecord]) -> Result<StatsReport> {
    if records.is_empty() {
        return Err(Error::invalid("statistics of an empty dataset"));
    }
    let nq = records.len() as f64;
    let hints = || records.iter().flat_map(|r| &r.hints);
    let n_hints = hints().count();
    let per_hint = |total: usize| {
        if n_hints == 0 {
            0.0
        } else {
            total as f64 / n_hints as f64
        }
    };
    Ok(StatsReport {
        n_questions: records.len(),
        n_hints,
        avg_question_len: records
            .iter()
            .map(|r| question_word_count(&r.question))
            .sum::<usize>() as f64
            / nq,
        avg_hint_len: per_hint(hints().map(|h| word_count(&h.text)).sum()),
        avg_hints_per_q: n_hints as f64 / nq,
        avg_entities_per_q: records.iter().map(|r| r.q_popularity.len()).sum::<usize>() as f64 / nq,
        avg_entities_per_hint: per_hint(hints().map(|h| h.entities.len()).sum()),
        avg_sources_per_q: records.iter().map(distinct_sources).sum::<usize>() as f64 / nq,
    })
}
