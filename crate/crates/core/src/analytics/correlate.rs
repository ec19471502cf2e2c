//! Agreement between automatic scores and human ratings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::annotation::{Attribute, RatingRow};
use crate::error::{Error, Result};
use crate::familiarity::{hifas, AggregateMode};
use crate::record::QuestionRecord;

/// `(q_id, hint_idx)`
pub type HintKey = (String, usize);

fn check_pair(xs: &[f64], ys: &[f64], min: usize) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!(
            "length mismatch {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < min {
        return Err(Error::invalid(format!(
            "need at least {min} samples, got {}",
            xs.len()
        )));
    }
    Ok(())
}

/// Product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys, 2)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn mse(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys, 1)?;
    Ok(xs.iter().zip(ys).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / xs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pearson_r: f64,
    pub mse: f64,
    pub n: usize,
}

/// Mean human rating per hint for one attribute, mapped from 1..5 onto
/// [0, 1] as `(r - 1) / 4`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HumanScores(pub BTreeMap<HintKey, f64>);

impl HumanScores {
    pub fn from_rows(rows: &[RatingRow], attribute: Attribute) -> Result<Self> {
        let mut acc: BTreeMap<HintKey, (f64, usize)> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.attribute == attribute) {
            if !(1..=5).contains(&r.rating) {
                return Err(Error::invalid(format!(
                    "rating {} for {}#{} outside 1..=5",
                    r.rating, r.q_id, r.hint_idx
                )));
            }
            let e = acc.entry((r.q_id.clone(), r.hint_idx)).or_default();
            e.0 += f64::from(r.rating - 1) / 4.0;
            e.1 += 1;
        }
        Ok(HumanScores(
            acc.into_iter()
                .map(|(k, (s, n))| (k, s / n as f64))
                .collect(),
        ))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Correlates metric values with human scores over the hints both cover.
pub fn correlate(
    metric: &BTreeMap<HintKey, f64>,
    human: &HumanScores,
) -> Result<CorrelationReport> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = human
        .0
        .iter()
        .filter_map(|(k, h)| metric.get(k).map(|m| (*h, *m)))
        .unzip();
    Ok(CorrelationReport {
        pearson_r: pearson(&xs, &ys)?,
        mse: mse(&xs, &ys)?,
        n: xs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Hicos,
    Hifas,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hicos" | "convergence" => Ok(Metric::Hicos),
            "hifas" | "familiarity" => Ok(Metric::Hifas),
            _ => Err(format!("unknown metric {s:?}")),
        }
    }
}

impl Metric {
    pub fn attribute(self) -> Attribute {
        match self {
            Metric::Hicos => Attribute::Convergence,
            Metric::Hifas => Attribute::Familiarity,
        }
    }
}

/// Present per-hint scores of a dataset. HIFAS is recomputed from the
/// stored entity popularities under `mode`.
pub fn metric_scores(
    records: &[QuestionRecord],
    metric: Metric,
    mode: AggregateMode,
) -> BTreeMap<HintKey, f64> {
    records
        .iter()
        .flat_map(|r| {
            r.hints.iter().enumerate().filter_map(move |(i, h)| {
                let v = match metric {
                    Metric::Hicos => h.hicos,
                    Metric::Hifas => hifas(&h.h_popularity, mode),
                };
                v.map(|v| ((r.q_id.clone(), i), v))
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub mode: AggregateMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<CorrelationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationComparison {
    pub modes: Vec<ModeResult>,
    /// Mode with the highest Pearson r; earlier modes win ties.
    pub best: Option<AggregateMode>,
}

pub fn compare_aggregations(
    human: &HumanScores,
    per_mode: &[(AggregateMode, BTreeMap<HintKey, f64>)],
) -> AggregationComparison {
    let modes: Vec<ModeResult> = per_mode
        .iter()
        .map(|(mode, scores)| match correlate(scores, human) {
            Ok(report) => ModeResult {
                mode: *mode,
                report: Some(report),
                error: None,
            },
            Err(e) => ModeResult {
                mode: *mode,
                report: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let mut best: Option<(AggregateMode, f64)> = None;
    for m in &modes {
        if let Some(r) = m.report {
            if best.is_none_or(|(_, b)| r.pearson_r > b) {
                best = Some((m.mode, r.pearson_r));
            }
        }
    }
    AggregationComparison {
        modes,
        best: best.map(|b| b.0),
    }
}
