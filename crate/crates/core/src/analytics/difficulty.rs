//! Easy/medium/hard labels from answer popularity or passage relevance.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{contains_run, normalize_tokens};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifficultyLevel {
    Easy,
    Medium,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyBasis {
    QuestionRetrieval,
    AnswerPopularity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyLabel {
    pub level: DifficultyLevel,
    pub basis: DifficultyBasis,
    pub raw: f64,
}

fn check_unit(what: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} {v} outside [0, 1]")))
    }
}

/// Easy above 0.66, hard below 0.33, medium in between (both ends inclusive).
pub fn answer_difficulty(popularity: f64) -> Result<DifficultyLabel> {
    check_unit("popularity", popularity)?;
    let level = if popularity > 0.66 {
        DifficultyLevel::Easy
    } else if popularity >= 0.33 {
        DifficultyLevel::Medium
    } else {
        DifficultyLevel::Hard
    };
    Ok(DifficultyLabel {
        level,
        basis: DifficultyBasis::AnswerPopularity,
        raw: popularity,
    })
}

/// Hard below 1/3, medium below 2/3, easy from 2/3 up.
pub fn question_difficulty(relevance_fraction: f64) -> Result<DifficultyLabel> {
    check_unit("relevance fraction", relevance_fraction)?;
    let level = if relevance_fraction < 1.0 / 3.0 {
        DifficultyLevel::Hard
    } else if relevance_fraction < 2.0 / 3.0 {
        DifficultyLevel::Medium
    } else {
        DifficultyLevel::Easy
    };
    Ok(DifficultyLabel {
        level,
        basis: DifficultyBasis::QuestionRetrieval,
        raw: relevance_fraction,
    })
}

/// Passage retrieval for a question.
pub trait Retriever: Sync {
    fn retrieve(&self, question: &str, k: usize) -> Result<Vec<String>>;
}

/// Share of the retrieved passages that contain the normalized answer.
/// Divides by the number of passages actually returned.
pub fn relevance_fraction(
    question: &str,
    answer: &str,
    retriever: &dyn Retriever,
    k: usize,
) -> Result<f64> {
    let passages = retriever.retrieve(question, k)?;
    let passages = &passages[..passages.len().min(k)];
    if passages.is_empty() {
        return Err(Error::invalid(format!(
            "retriever returned no passages for {question:?}"
        )));
    }
    let needle = normalize_tokens(answer);
    if needle.is_empty() {
        return Err(Error::invalid("empty answer"));
    }
    let hits = passages
        .iter()
        .filter(|p| contains_run(&normalize_tokens(p), &needle))
        .count();
    Ok(hits as f64 / passages.len() as f64)
}

/// Passages read from a JSONL file of `{"question": ..., "passages": [...]}`.
#[derive(Debug, Clone, Default)]
pub struct FileRetriever {
    by_question: HashMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PassageRow {
    pub question: String,
    pub passages: Vec<String>,
}

impl FileRetriever {
    pub fn load(path: &Path) -> Result<Self> {
        let rows: Vec<PassageRow> = crate::jsonl::read(path)?;
        Ok(Self::from_rows(rows))
    }

    pub fn from_rows(rows: Vec<PassageRow>) -> Self {
        FileRetriever {
            by_question: rows.into_iter().map(|r| (r.question, r.passages)).collect(),
        }
    }
}

impl Retriever for FileRetriever {
    fn retrieve(&self, question: &str, k: usize) -> Result<Vec<String>> {
        let passages = self
            .by_question
            .get(question)
            .ok_or_else(|| Error::invalid(format!("no passages stored for {question:?}")))?;
        Ok(passages.iter().take(k).cloned().collect())
    }
}

/// Calls a search service: `POST {url}` with `{"query": ..., "k": ...}`,
/// expecting `{"passages": ["...", ...]}`.
pub struct HttpRetriever {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpRetriever {
    pub fn new(url: impl Into<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(HttpRetriever {
            url: url.into(),
            client,
        })
    }
}

impl Retriever for HttpRetriever {
    fn retrieve(&self, question: &str, k: usize) -> Result<Vec<String>> {
        #[derive(Deserialize)]
        struct Reply {
            passages: Vec<String>,
        }
        let reply: Reply = self
            .client
            .post(&self.url)
            .json(&serde_json::json!({"query": question, "k": k}))
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| Error::Extraction(format!("retriever: {e}")))?;
        Ok(reply.passages)
    }
}
