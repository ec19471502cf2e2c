//! Hint convergence (HICOS): how well a hint narrows the candidate answers
//! of a question down to the right one.
//!
//! A chat model proposes candidate answers, then judges each candidate
//! against the hint with a Yes/No prompt. With `n` candidates of which `s`
//! are judged valid, the score is `1 - (s - 1) / n` when the exact answer is
//! among the valid ones and 0 otherwise.

use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hints::markers::parse_list_items;
use crate::record::QuestionRecord;
use crate::services::{Chat, SamplingParams};
use crate::text::normalized_key;

pub const CANDIDATES_PROMPT: &str =
    "Generate up to {n} candidate answers words for the question \"{question}\" in bullet points.";
pub const JUDGE_PROMPT: &str =
    "Does the hint \"{hint}\" refer to \"{candidate}\"? Choose ONLY between \"Yes\" or \"No\".";

pub const DEFAULT_CANDIDATES: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceConfig {
    pub n_max: usize,
    pub candidates_template: String,
    pub judge_template: String,
    pub params: SamplingParams,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            n_max: DEFAULT_CANDIDATES,
            candidates_template: CANDIDATES_PROMPT.into(),
            judge_template: JUDGE_PROMPT.into(),
            params: SamplingParams::default(),
        }
    }
}

impl ConvergenceConfig {
    pub fn candidates_prompt(&self, question: &str, n: usize) -> String {
        self.candidates_template
            .replace("{n}", &n.to_string())
            .replace("{question}", question)
    }

    pub fn judge_prompt(&self, hint: &str, candidate: &str) -> String {
        self.judge_template
            .replace("{hint}", hint)
            .replace("{candidate}", candidate)
    }
}

/// List items from a candidate reply, deduplicated by normalized form and
/// cut to `n_max`.
pub fn parse_candidates(reply: &str, n_max: usize) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    parse_list_items(reply)
        .into_iter()
        .filter(|c| {
            let key = normalized_key(c);
            !key.is_empty() && seen.insert(key)
        })
        .take(n_max)
        .collect()
}

pub fn generate_candidates(
    question: &str,
    n_max: usize,
    chat: &dyn Chat,
    config: &ConvergenceConfig,
) -> Result<Vec<String>> {
    if n_max == 0 {
        return Err(Error::invalid("n_max must be at least 1"));
    }
    let reply = chat.chat(&config.candidates_prompt(question, n_max), &config.params)?;
    let candidates = parse_candidates(&reply, n_max);
    if candidates.is_empty() {
        return Err(Error::CandidateGeneration(format!(
            "no candidate list for {question:?}: {reply:?}"
        )));
    }
    Ok(candidates)
}

/// Appends the exact answer unless a candidate already matches it by
/// normalized form. Returns the list and the answer's position.
pub fn with_exact_answer(mut candidates: Vec<String>, answer: &str) -> (Vec<String>, usize) {
    let key = normalized_key(answer);
    match candidates.iter().position(|c| normalized_key(c) == key) {
        Some(i) => (candidates, i),
        None => {
            candidates.push(answer.to_owned());
            let i = candidates.len() - 1;
            (candidates, i)
        }
    }
}

static ALPHA: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z]+").unwrap());

/// `Some(true)` for a leading "yes", `Some(false)` for "no", else `None`.
pub fn parse_yes_no(reply: &str) -> Option<bool> {
    match ALPHA.find(reply)?.as_str().to_ascii_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Asks whether the hint refers to the candidate; one retry on an
/// unusable reply.
pub fn judge(
    hint: &str,
    candidate: &str,
    chat: &dyn Chat,
    config: &ConvergenceConfig,
) -> Result<bool> {
    let prompt = config.judge_prompt(hint, candidate);
    let mut last = String::new();
    for attempt in 0..2 {
        last = chat.chat(&prompt, &config.params.retry(attempt))?;
        if let Some(v) = parse_yes_no(&last) {
            return Ok(v);
        }
    }
    Err(Error::Judgement {
        candidate: candidate.to_owned(),
        response: last,
    })
}

/// The score as an unreduced fraction `(numerator, n)`.
pub fn hicos_ratio(cand_valid: &[bool], ea_valid: bool) -> Result<(usize, usize)> {
    let n = cand_valid.len();
    if n == 0 {
        return Err(Error::invalid("HICOS needs at least one candidate"));
    }
    if !ea_valid {
        return Ok((0, n));
    }
    let s = cand_valid.iter().filter(|v| **v).count();
    if s == 0 {
        return Err(Error::invalid(
            "exact answer judged valid but no candidate is valid",
        ));
    }
    Ok((n - s + 1, n))
}

pub fn hicos(cand_valid: &[bool], ea_valid: bool) -> Result<f64> {
    let (num, den) = hicos_ratio(cand_valid, ea_valid)?;
    // both operands are exact, so the division is correctly rounded
    Ok(num as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceJudgement {
    pub candidates: Vec<String>,
    /// `None` where the judge gave no usable Yes/No.
    pub cand_valid: Vec<Option<bool>>,
    pub answer_index: usize,
    pub ea_valid: Option<bool>,
    pub n_candidates: usize,
    pub score: Option<f64>,
}

impl ConvergenceJudgement {
    /// All verdicts, or `None` if any judgement failed.
    pub fn verdicts(&self) -> Option<Vec<bool>> {
        self.cand_valid.iter().copied().collect()
    }
}

/// Judges every candidate (the exact answer included) against one hint.
/// `candidates` must already contain the answer at `answer_index`.
pub fn judge_candidates(
    hint: &str,
    candidates: &[String],
    answer_index: usize,
    chat: &dyn Chat,
    config: &ConvergenceConfig,
) -> Result<ConvergenceJudgement> {
    if answer_index >= candidates.len() {
        return Err(Error::invalid("answer index outside candidate list"));
    }
    let cand_valid: Vec<Option<bool>> = candidates
        .par_iter()
        .map(|c| match judge(hint, c, chat, config) {
            Ok(v) => Ok(Some(v)),
            Err(Error::Judgement {
                candidate,
                response,
            }) => {
                log::warn!("no verdict for candidate {candidate:?}: {response:?}");
                Ok(None)
            }
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let ea_valid = cand_valid[answer_index];
    // a rejected exact answer fixes the score at 0 whatever else failed
    let score = match (
        ea_valid,
        cand_valid.iter().copied().collect::<Option<Vec<bool>>>(),
    ) {
        (Some(false), _) => Some(0.0),
        (_, Some(v)) => Some(hicos(&v, v[answer_index])?),
        (_, None) => None,
    };
    Ok(ConvergenceJudgement {
        n_candidates: candidates.len(),
        candidates: candidates.to_vec(),
        cand_valid,
        answer_index,
        ea_valid,
        score,
    })
}

pub fn evaluate_hint_convergence(
    question: &str,
    exact_answer: &str,
    hint: &str,
    config: &ConvergenceConfig,
    chat: &dyn Chat,
) -> Result<ConvergenceJudgement> {
    let generated = generate_candidates(question, config.n_max, chat, config)?;
    let (candidates, idx) = with_exact_answer(generated, exact_answer);
    judge_candidates(hint, &candidates, idx, chat, config)
}

/// Fills `Candidate_Answers`, per-hint `Scores`/`Convergence` and the
/// record-level mean. Hints with a failed judgement keep empty `Scores`
/// and no score.
pub fn score_record(
    record: &mut QuestionRecord,
    chat: &dyn Chat,
    config: &ConvergenceConfig,
) -> Result<()> {
    let generated = generate_candidates(&record.question, config.n_max, chat, config)?;
    let (candidates, idx) = with_exact_answer(generated, &record.exact_answer);
    for hint in &mut record.hints {
        let j = judge_candidates(&hint.text, &candidates, idx, chat, config)?;
        hint.candidate_verdicts = j.verdicts().unwrap_or_default();
        hint.hicos = j.score;
    }
    record.candidate_answers = candidates;
    record.convergence = record.mean_hint_score(|h| h.hicos);
    Ok(())
}
