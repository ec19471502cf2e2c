//! Two-stage hint filter: lexical leakage, then question-rephrase similarity.

use serde::{Deserialize, Serialize};

use super::leakage::leaks_answer;
use crate::error::{Error, Result};
use crate::record::{Hint, QuestionRecord};
use crate::services::{EmbeddingVector, ServiceClient, ServiceError};

pub trait Embedder: Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ServiceError>;
}

impl Embedder for ServiceClient {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ServiceError> {
        ServiceClient::embed(self, text)
    }
}

/// Cosine similarity clamped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::UndefinedSimilarity(format!(
            "dimension mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity("zero-norm embedding".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn question_similarity(hint: &str, question: &str, embedder: &dyn Embedder) -> Result<f64> {
    let h = embedder.embed(hint)?;
    let q = embedder.embed(question)?;
    cosine(h.values(), q.values())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Leak,
    Rephrase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<Hint>,
    /// Original position, the hint with its verdicts, and why it went.
    pub dropped: Vec<(usize, Hint, DropReason)>,
}

/// Drops leaking hints, then hints whose similarity to the question is at
/// least `threshold`. Order is preserved and every hint carries its
/// `leak_flag`; similarity is only computed for hints that do not leak.
pub fn filter_hints(
    hints: Vec<Hint>,
    answer: &str,
    question: &str,
    threshold: f64,
    embedder: &dyn Embedder,
) -> Result<FilterOutcome> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut question_vec = None;
    for (i, mut hint) in hints.into_iter().enumerate() {
        hint.leak_flag = leaks_answer(&hint.text, answer).leaked;
        if hint.leak_flag {
            hint.question_similarity = None;
            dropped.push((i, hint, DropReason::Leak));
            continue;
        }
        if question_vec.is_none() {
            question_vec = Some(embedder.embed(question)?);
        }
        let q = question_vec.as_ref().expect("set above");
        let sim = cosine(embedder.embed(&hint.text)?.values(), q.values())?;
        hint.question_similarity = Some(sim);
        if sim >= threshold {
            dropped.push((i, hint, DropReason::Rephrase));
        } else {
            kept.push(hint);
        }
    }
    Ok(FilterOutcome { kept, dropped })
}

/// Splits records into those with at least `min_hints` hints and the rest.
pub fn prune_questions(
    records: Vec<QuestionRecord>,
    min_hints: usize,
) -> (Vec<QuestionRecord>, Vec<QuestionRecord>) {
    records
        .into_iter()
        .partition(|r| r.hints.len() >= min_hints)
}
