//! HICOS agreement with human convergence ratings as a function of the
//! number of candidate answers.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::correlate::{pearson, HintKey, HumanScores};
use crate::convergence::{generate_candidates, hicos, judge, with_exact_answer, ConvergenceConfig};
use crate::error::{Error, Result};
use crate::record::QuestionRecord;
use crate::services::Chat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateMode {
    /// One list of the largest size, cut to each `n`.
    #[default]
    Truncate,
    /// A fresh candidate prompt for every `n`.
    Regenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    /// `None` when the scores at this `n` have no variance.
    pub pearson_r: Option<f64>,
    pub n_samples: usize,
}

/// Verdicts for one hint, memoized by candidate text.
struct HintVerdicts<'a> {
    text: &'a str,
    key: HintKey,
    seen: HashMap<String, Option<bool>>,
}

impl HintVerdicts<'_> {
    fn verdict(
        &mut self,
        candidate: &str,
        chat: &dyn Chat,
        config: &ConvergenceConfig,
    ) -> Result<Option<bool>> {
        if let Some(v) = self.seen.get(candidate) {
            return Ok(*v);
        }
        let v = match judge(self.text, candidate, chat, config) {
            Ok(v) => Some(v),
            Err(Error::Judgement { .. }) => None,
            Err(e) => return Err(e),
        };
        self.seen.insert(candidate.to_owned(), v);
        Ok(v)
    }

    fn score(
        &mut self,
        candidates: &[String],
        answer_idx: usize,
        chat: &dyn Chat,
        config: &ConvergenceConfig,
    ) -> Result<Option<f64>> {
        let mut verdicts = Vec::with_capacity(candidates.len());
        for c in candidates {
            match self.verdict(c, chat, config)? {
                Some(v) => verdicts.push(v),
                None => return Ok(None),
            }
        }
        Ok(Some(hicos(&verdicts, verdicts[answer_idx])?))
    }
}

/// Per-record scores for every `n`, only for hints with a human score.
fn record_scores(
    record: &QuestionRecord,
    human: &HumanScores,
    ns: &[usize],
    chat: &dyn Chat,
    config: &ConvergenceConfig,
    mode: CandidateMode,
) -> Result<Vec<Vec<(HintKey, f64)>>> {
    let mut hints: Vec<HintVerdicts> = record
        .hints
        .iter()
        .enumerate()
        .map(|(i, h)| HintVerdicts {
            text: &h.text,
            key: (record.q_id.clone(), i),
            seen: HashMap::new(),
        })
        .filter(|h| human.0.contains_key(&h.key))
        .collect();
    if hints.is_empty() {
        return Ok(vec![Vec::new(); ns.len()]);
    }
    let full = match mode {
        CandidateMode::Truncate => {
            let max = *ns.iter().max().expect("nonempty range");
            Some(generate_candidates(&record.question, max, chat, config)?)
        }
        CandidateMode::Regenerate => None,
    };
    let mut out = Vec::with_capacity(ns.len());
    for &n in ns {
        let list = match &full {
            Some(all) => all[..n.min(all.len())].to_vec(),
            None => generate_candidates(&record.question, n, chat, config)?,
        };
        let (candidates, idx) = with_exact_answer(list, &record.exact_answer);
        let mut point = Vec::new();
        for h in &mut hints {
            if let Some(s) = h.score(&candidates, idx, chat, config)? {
                point.push((h.key.clone(), s));
            }
        }
        out.push(point);
    }
    Ok(out)
}

pub fn hicos_sweep(
    records: &[QuestionRecord],
    human: &HumanScores,
    n_range: RangeInclusive<usize>,
    chat: &dyn Chat,
    config: &ConvergenceConfig,
    mode: CandidateMode,
) -> Result<Vec<SweepPoint>> {
    let ns: Vec<usize> = n_range.collect();
    if ns.is_empty() || ns[0] == 0 {
        return Err(Error::invalid(
            "candidate range must be nonempty and start at 1 or more",
        ));
    }
    let per_record: Vec<Vec<Vec<(HintKey, f64)>>> = records
        .par_iter()
        .map(|r| record_scores(r, human, &ns, chat, config, mode))
        .collect::<Result<_>>()?;
    Ok(ns
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = per_record
                .iter()
                .flat_map(|r| &r[j])
                .map(|(k, s)| (human.0[k], *s))
                .unzip();
            SweepPoint {
                n,
                pearson_r: pearson(&xs, &ys).ok(),
                n_samples: xs.len(),
            }
        })
        .collect())
}

/// The `n` with the highest correlation; the smallest such `n` on ties.
pub fn best_n(points: &[SweepPoint]) -> Option<usize> {
    points
        .iter()
        .filter_map(|p| p.pearson_r.map(|r| (p.n, r)))
        .fold(None, |best: Option<(usize, f64)>, (n, r)| match best {
            Some((_, b)) if b >= r => best,
            _ => Some((n, r)),
        })
        .map(|b| b.0)
}

/// `n,pearson_r,n_samples` with an empty field for undefined correlations.
pub fn curve_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("n,pearson_r,n_samples\n");
    for p in points {
        let r = p.pearson_r.map(|r| r.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", p.n, r, p.n_samples);
    }
    s
}

/// Parses `a..b` (inclusive) or a single number.
pub fn parse_range(spec: &str) -> Result<RangeInclusive<usize>> {
    let bad = || Error::invalid(format!("bad range {spec:?}, expected like 1..20"));
    let (a, b) = match spec.split_once("..") {
        Some((a, b)) => (a, b.trim_start_matches('=')),
        None => (spec, spec),
    };
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || a > b {
        return Err(bad());
    }
    Ok(a..=b)
}
