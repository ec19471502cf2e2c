//! Hint familiarity (HIFAS): how well known the entities a hint mentions are,
//! measured by Wikipedia page views.
//!
//! Raw popularity is the mean monthly view count of an entity's article over
//! 2015-01..2023-12. A normalizer fitted on a reference corpus clamps
//! outliers with the 1.5 IQR rule and scales linearly into [0, 1].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hints::markers::parse_list_items;
use crate::questions::WikiResolver;
use crate::record::{EntityMention, Hint, QuestionRecord};
use crate::services::{Chat, SamplingParams, ServiceClient, ServiceError};

pub const WINDOW_START: &str = "20150101";
pub const WINDOW_END: &str = "20231231";

pub trait EntityExtractor: Sync {
    /// Non-overlapping mentions in text order, with titles where known.
    fn extract(&self, text: &str) -> Result<Vec<EntityMention>>;
}

/// Dictionary lookup: longest match wins, mentions never overlap, matches
/// must sit on word boundaries. Case-sensitive.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GazetteerExtractor {
    /// Surface form and Wikipedia title.
    entries: Vec<(String, String)>,
}

impl GazetteerExtractor {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        let mut entries: Vec<(String, String)> =
            entries.into_iter().filter(|(s, _)| !s.is_empty()).collect();
        entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        entries.dedup_by(|a, b| a.0 == b.0);
        GazetteerExtractor { entries }
    }

    /// Reads a JSONL file of `{"surface": ..., "title": ...}` rows.
    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            surface: String,
            title: String,
        }
        let rows: Vec<Row> = crate::jsonl::read(path)?;
        Ok(Self::new(rows.into_iter().map(|r| (r.surface, r.title))))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn boundary_ok(text: &str, start: usize, end: usize) -> bool {
    let before = text[..start].chars().next_back();
    let after = text[end..].chars().next();
    !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
}

impl EntityExtractor for GazetteerExtractor {
    fn extract(&self, text: &str) -> Result<Vec<EntityMention>> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < text.len() {
            let rest = &text[pos..];
            let hit = self.entries.iter().find(|(s, _)| {
                rest.starts_with(s.as_str()) && boundary_ok(text, pos, pos + s.len())
            });
            match hit {
                Some((surface, title)) => {
                    out.push(EntityMention {
                        surface: surface.clone(),
                        wiki_title: Some(title.clone()),
                        raw_views: None,
                    });
                    pos += surface.len();
                }
                None => pos += rest.chars().next().map_or(1, char::len_utf8),
            }
        }
        Ok(out)
    }
}

pub const ENTITY_PROMPT: &str =
    "List the named entities mentioned in the text below as bullet points, \
copying each one exactly as written. If there are none, reply \"- none\".\nText: {text}";

/// Asks a chat model for entities, keeps those that occur verbatim in the
/// text, and resolves each to a Wikipedia title.
pub struct LlmEntityExtractor<'a> {
    pub chat: &'a dyn Chat,
    pub resolver: &'a dyn WikiResolver,
    pub template: String,
    pub params: SamplingParams,
}

impl<'a> LlmEntityExtractor<'a> {
    pub fn new(client: &'a ServiceClient) -> Self {
        LlmEntityExtractor {
            chat: client,
            resolver: client,
            template: ENTITY_PROMPT.into(),
            params: SamplingParams::default(),
        }
    }
}

impl EntityExtractor for LlmEntityExtractor<'_> {
    fn extract(&self, text: &str) -> Result<Vec<EntityMention>> {
        let reply = self
            .chat
            .chat(&self.template.replace("{text}", text), &self.params)?;
        let mut spans: Vec<(usize, String)> = Vec::new();
        for item in parse_list_items(&reply) {
            if item.eq_ignore_ascii_case("none") {
                continue;
            }
            let Some(start) = text.find(&item) else {
                continue;
            };
            let end = start + item.len();
            let overlaps = spans.iter().any(|(s, t)| start < s + t.len() && *s < end);
            if !overlaps {
                spans.push((start, item));
            }
        }
        spans.sort_by_key(|(s, _)| *s);
        spans
            .into_iter()
            .map(|(_, surface)| {
                let wiki_title = self.resolver.resolve(&surface)?;
                Ok(EntityMention {
                    surface,
                    wiki_title,
                    raw_views: None,
                })
            })
            .collect()
    }
}

/// Mean monthly page views of an article, `None` if it has no article or no
/// recorded months.
pub trait Pageviews: Sync {
    fn mean_monthly_views(&self, title: &str) -> Result<Option<f64>, ServiceError>;
}

impl Pageviews for ServiceClient {
    fn mean_monthly_views(&self, title: &str) -> Result<Option<f64>, ServiceError> {
        match self.monthly_pageviews(title, WINDOW_START, WINDOW_END) {
            Ok(months) => Ok(mean(months.iter().map(|m| m.views as f64))),
            Err(ServiceError::ArticleMissing { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn raw_popularity(entity: &EntityMention, pageviews: &dyn Pageviews) -> Result<Option<f64>> {
    match &entity.wiki_title {
        Some(title) => Ok(pageviews.mean_monthly_views(title)?),
        None => Ok(None),
    }
}

/// Linear-interpolation quantile of sorted data (`p` in [0, 1]).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamiliarityNormalizer {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower: f64,
    pub upper: f64,
    pub corpus_size: usize,
}

impl FamiliarityNormalizer {
    pub fn fit(views: &[f64]) -> Result<Self> {
        if views.len() < 4 {
            return Err(Error::invalid(format!(
                "calibration corpus needs at least 4 values, got {}",
                views.len()
            )));
        }
        if let Some(v) = views.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!(
                "calibration value {v} is not a finite view count"
            )));
        }
        let mut sorted = views.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile(&sorted, 0.25);
        let q3 = quantile(&sorted, 0.75);
        let iqr = q3 - q1;
        Ok(FamiliarityNormalizer {
            q1,
            q3,
            iqr,
            lower: q1 - 1.5 * iqr,
            upper: q3 + 1.5 * iqr,
            corpus_size: views.len(),
        })
    }

    /// Clamps to `[lower, upper]` and scales into [0, 1].
    pub fn normalize(&self, views: f64) -> f64 {
        if self.upper <= self.lower {
            return 0.5;
        }
        let v = if views.is_nan() {
            self.lower
        } else {
            views.clamp(self.lower, self.upper)
        };
        ((v - self.lower) / (self.upper - self.lower)).clamp(0.0, 1.0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("normalizer serializes");
        text.push('\n');
        crate::jsonl::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let n: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if !(n.q1 <= n.q3 && n.lower <= n.upper) {
            return Err(Error::Config(format!(
                "{}: inconsistent normalizer",
                path.display()
            )));
        }
        Ok(n)
    }
}

/// One row of a calibration corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub title: String,
    pub mean_monthly_views: f64,
}

pub fn read_calibration(path: &Path) -> Result<Vec<CalibrationEntry>> {
    crate::jsonl::read(path)
}

/// Fetches mean views for each title. Titles without an article are skipped.
pub fn build_calibration(
    titles: &[String],
    pageviews: &dyn Pageviews,
) -> Result<Vec<CalibrationEntry>> {
    let mut out = Vec::with_capacity(titles.len());
    for title in titles {
        if let Some(mean_monthly_views) = pageviews.mean_monthly_views(title)? {
            out.push(CalibrationEntry {
                title: title.clone(),
                mean_monthly_views,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateMode {
    Min,
    #[default]
    Avg,
    Max,
}

impl AggregateMode {
    pub const ALL: [AggregateMode; 3] =
        [AggregateMode::Min, AggregateMode::Avg, AggregateMode::Max];
}

impl fmt::Display for AggregateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregateMode::Min => "min",
            AggregateMode::Avg => "avg",
            AggregateMode::Max => "max",
        })
    }
}

impl FromStr for AggregateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "min" => Ok(AggregateMode::Min),
            "avg" | "mean" | "average" => Ok(AggregateMode::Avg),
            "max" => Ok(AggregateMode::Max),
            _ => Err(format!("unknown aggregation mode {s:?}")),
        }
    }
}

/// Aggregate of normalized entity values; `None` for no entities.
pub fn hifas(values: &[f64], mode: AggregateMode) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(match mode {
        AggregateMode::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        AggregateMode::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        AggregateMode::Avg => values.iter().sum::<f64>() / values.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamiliarityResult {
    /// Surface, raw mean views, normalized value.
    pub per_entity: Vec<(String, f64, f64)>,
    pub aggregate_mode: AggregateMode,
    pub hifas: Option<f64>,
}

/// Extracts and scores the entities of `text`. Entities without an article
/// or pageview data are left out.
pub fn score_text(
    text: &str,
    extractor: &dyn EntityExtractor,
    pageviews: &dyn Pageviews,
    normalizer: &FamiliarityNormalizer,
    mode: AggregateMode,
) -> Result<(Vec<EntityMention>, FamiliarityResult)> {
    let mut kept = Vec::new();
    let mut per_entity = Vec::new();
    for mut entity in extractor.extract(text)? {
        if let Some(raw) = raw_popularity(&entity, pageviews)? {
            entity.raw_views = Some(raw);
            per_entity.push((entity.surface.clone(), raw, normalizer.normalize(raw)));
            kept.push(entity);
        }
    }
    let values: Vec<f64> = per_entity.iter().map(|e| e.2).collect();
    let result = FamiliarityResult {
        hifas: hifas(&values, mode),
        per_entity,
        aggregate_mode: mode,
    };
    Ok((kept, result))
}

pub fn score_hint(
    hint: &mut Hint,
    extractor: &dyn EntityExtractor,
    pageviews: &dyn Pageviews,
    normalizer: &FamiliarityNormalizer,
    mode: AggregateMode,
) -> Result<FamiliarityResult> {
    let (entities, result) = score_text(&hint.text, extractor, pageviews, normalizer, mode)?;
    hint.h_popularity = result.per_entity.iter().map(|e| e.2).collect();
    hint.entities = entities;
    hint.hifas = result.hifas;
    Ok(result)
}

/// Scores every hint, the question's entities and the exact answer, then
/// sets the record-level mean.
pub fn score_record(
    record: &mut QuestionRecord,
    extractor: &dyn EntityExtractor,
    pageviews: &dyn Pageviews,
    resolver: &dyn WikiResolver,
    normalizer: &FamiliarityNormalizer,
    mode: AggregateMode,
) -> Result<()> {
    for hint in &mut record.hints {
        score_hint(hint, extractor, pageviews, normalizer, mode)?;
    }
    let (_, q) = score_text(&record.question, extractor, pageviews, normalizer, mode)?;
    record.q_popularity = q.per_entity.iter().map(|e| e.2).collect();
    record.exact_answer_popularity = match resolver.resolve(&record.exact_answer)? {
        Some(title) => pageviews
            .mean_monthly_views(&title)?
            .map(|v| normalizer.normalize(v)),
        None => None,
    };
    record.familiarity = record.mean_hint_score(|h| h.hifas);
    Ok(())
}
