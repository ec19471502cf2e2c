//! End-to-end dataset construction with per-stage outputs and resume.

mod config;
mod manifest;

pub use config::{ClassifierKind, ExtractorKind, PipelineConfig, PromptConfig, ServiceConfig};
pub use manifest::{
    CacheSummary, Checkpoint, HintFilterCounts, Manifest, Rejection, Stage, StageReport,
};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::dataset_stats;
use crate::convergence::{self, ConvergenceConfig};
use crate::error::{Error, Result};
use crate::familiarity::{
    self, EntityExtractor, FamiliarityNormalizer, GazetteerExtractor, LlmEntityExtractor,
};
use crate::hints::{
    elicit_answer, filter_hints, request_hints, DropReason, GenerationOutcome, GenerationStatus,
    HintPrompts,
};
use crate::jsonl;
use crate::questions::{
    admit_type, filter_question, stratified_sample, KeywordClassifier, LlmClassifier,
    QuestionClassifier, RejectReason,
};
use crate::record::{write_dataset, FinalRules, Hint, QuestionRecord, RawQuestion};
use crate::services::http::HttpBackend;
use crate::services::{ClientStats, SamplingParams, ServiceClient};

/// A question together with its elicited answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRow {
    pub question: RawQuestion,
    pub outcome: GenerationOutcome,
}

/// Rows flowing between stages.
#[derive(Debug, Clone, PartialEq)]
pub enum Rows {
    Raw(Vec<RawQuestion>),
    Generated(Vec<GeneratedRow>),
    Records(Vec<QuestionRecord>),
}

impl Rows {
    pub fn len(&self) -> usize {
        match self {
            Rows::Raw(v) => v.len(),
            Rows::Generated(v) => v.len(),
            Rows::Records(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        match self {
            Rows::Raw(v) => jsonl::write(path, v),
            Rows::Generated(v) => jsonl::write(path, v),
            Rows::Records(v) => jsonl::write(path, v),
        }
    }

    /// Reads the output file of `stage`.
    pub fn read(stage: Stage, path: &Path) -> Result<Self> {
        Ok(match stage {
            Stage::Filter | Stage::Classify | Stage::Sample => Rows::Raw(jsonl::read(path)?),
            Stage::Generate | Stage::Verify => Rows::Generated(jsonl::read(path)?),
            _ => Rows::Records(jsonl::read(path)?),
        })
    }

    pub fn into_records(self) -> Result<Vec<QuestionRecord>> {
        match self {
            Rows::Records(v) => Ok(v),
            _ => Err(Error::invalid("expected scored records")),
        }
    }
}

/// Everything a stage needs besides its input rows.
pub struct StageContext<'a> {
    pub config: &'a PipelineConfig,
    pub client: &'a ServiceClient,
    pub classifier: &'a dyn QuestionClassifier,
    /// Needed by the familiarity stage only.
    pub extractor: Option<&'a dyn EntityExtractor>,
    pub normalizer: Option<&'a FamiliarityNormalizer>,
    pub hint_prompts: HintPrompts,
    pub convergence: ConvergenceConfig,
    pub params: SamplingParams,
}

pub struct StageResult {
    pub rows: Rows,
    pub report: StageReport,
    pub hint_filter: HintFilterCounts,
}

fn reject_code(r: RejectReason) -> &'static str {
    match r {
        RejectReason::TooShort => "too_short",
        RejectReason::TooLong => "too_long",
        RejectReason::NoQuestionMark => "no_question_mark",
        RejectReason::AnswerNoWikiPage => "answer_no_wiki_page",
        RejectReason::DescriptionType => "description_type",
    }
}

fn rejection(q_id: &str, reason: impl Into<String>) -> Rejection {
    Rejection {
        q_id: q_id.to_owned(),
        reason: reason.into(),
    }
}

/// Per-item verdict inside a stage.
enum Step<T> {
    Keep(T),
    Drop(Rejection),
}

fn split<T>(steps: Vec<Step<T>>) -> (Vec<T>, Vec<Rejection>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for s in steps {
        match s {
            Step::Keep(t) => kept.push(t),
            Step::Drop(r) => dropped.push(r),
        }
    }
    (kept, dropped)
}

fn wrong_rows(stage: Stage) -> Error {
    Error::invalid(format!("stage {stage} received rows of the wrong kind"))
}

fn stats_delta(after: ClientStats, before: ClientStats) -> ClientStats {
    ClientStats {
        requests: after.requests - before.requests,
        cache_hits: after.cache_hits - before.cache_hits,
        backend_calls: after.backend_calls - before.backend_calls,
    }
}

/// Metric scoring: service failures halt the run, anything else leaves the
/// record unscored.
fn score_each(
    records: Vec<QuestionRecord>,
    f: impl Fn(&mut QuestionRecord) -> Result<()> + Sync,
) -> Result<(Vec<QuestionRecord>, Vec<Rejection>)> {
    let scored: Vec<Result<(QuestionRecord, Option<Rejection>)>> = records
        .into_par_iter()
        .map(|r| {
            let mut working = r.clone();
            match f(&mut working) {
                Ok(()) => Ok((working, None)),
                Err(e @ Error::Service(_)) => Err(e),
                Err(e) => {
                    log::warn!("{}: left unscored: {e}", r.q_id);
                    let q_id = r.q_id.clone();
                    Ok((r, Some(rejection(&q_id, e.to_string()))))
                }
            }
        })
        .collect();
    let mut out = Vec::new();
    let mut unscored = Vec::new();
    for s in scored {
        let (r, note) = s?;
        out.push(r);
        unscored.extend(note);
    }
    Ok((out, unscored))
}

fn build_record(
    row: GeneratedRow,
    hints_raw: Vec<(String, Vec<u32>)>,
    hints_sources: Vec<String>,
    limit: usize,
) -> QuestionRecord {
    let q = row.question;
    QuestionRecord {
        q_id: q.q_id,
        question: q.question,
        hints: hints_raw
            .into_iter()
            .take(limit)
            .map(|(text, idx)| Hint {
                source_indices: idx,
                ..Hint::new(text)
            })
            .collect(),
        hints_sources,
        snippet: row.outcome.snippet.unwrap_or_default(),
        snippet_sources: row.outcome.snippet_sources,
        exact_answer: q.exact_answer,
        major_type: q.major_type.expect("classified before generation"),
        minor_type: q.minor_type.unwrap_or_default(),
        candidate_answers: Vec::new(),
        q_popularity: Vec::new(),
        exact_answer_popularity: None,
        convergence: None,
        familiarity: None,
    }
}

/// Runs one stage over `rows`.
pub fn run_stage(stage: Stage, rows: Rows, ctx: &StageContext<'_>) -> Result<StageResult> {
    let input = rows.len();
    let before = ctx.client.stats();
    let cfg = ctx.config;
    let mut hint_filter = HintFilterCounts::default();
    let mut unscored = Vec::new();
    let (rows, rejections) = match (stage, rows) {
        (Stage::Filter, Rows::Raw(qs)) => {
            let steps: Result<Vec<Step<RawQuestion>>> = qs
                .into_par_iter()
                .map(|q| {
                    let v = filter_question(&q.question, &q.exact_answer, ctx.client)?;
                    Ok(match v.reason() {
                        None => Step::Keep(q),
                        Some(r) => Step::Drop(rejection(&q.q_id, reject_code(r))),
                    })
                })
                .collect();
            let (kept, dropped) = split(steps?);
            (Rows::Raw(kept), dropped)
        }
        (Stage::Classify, Rows::Raw(qs)) => {
            let steps: Result<Vec<Step<RawQuestion>>> = qs
                .into_par_iter()
                .map(|mut q| {
                    if q.major_type.is_none() {
                        match ctx.classifier.classify(&q.question) {
                            Ok(label) => {
                                if let Some(r) = admit_type(&label).reason() {
                                    return Ok(Step::Drop(rejection(&q.q_id, reject_code(r))));
                                }
                                q.major_type = Some(label.major);
                                q.minor_type = Some(label.minor);
                            }
                            Err(e @ Error::Classification { .. }) => {
                                return Ok(Step::Drop(rejection(
                                    &q.q_id,
                                    format!("classification_failed: {e}"),
                                )))
                            }
                            Err(e) => return Err(e),
                        }
                    }
                    if q.major_type == Some(crate::MajorType::Description) {
                        return Ok(Step::Drop(rejection(
                            &q.q_id,
                            reject_code(RejectReason::DescriptionType),
                        )));
                    }
                    Ok(Step::Keep(q))
                })
                .collect();
            let (kept, dropped) = split(steps?);
            (Rows::Raw(kept), dropped)
        }
        (Stage::Sample, Rows::Raw(qs)) => {
            let kept = stratified_sample(
                &qs,
                |q| q.major_type.expect("classified"),
                cfg.sample_fraction,
                cfg.seed,
            )?;
            let mut ids: std::collections::HashSet<&str> =
                kept.iter().map(|q| q.q_id.as_str()).collect();
            let dropped = qs
                .iter()
                .filter(|q| !ids.remove(q.q_id.as_str()))
                .map(|q| rejection(&q.q_id, "not_sampled"))
                .collect();
            (Rows::Raw(kept), dropped)
        }
        (Stage::Generate, Rows::Raw(qs)) => {
            let steps: Result<Vec<Step<GeneratedRow>>> = qs
                .into_par_iter()
                .map(|q| {
                    let outcome = elicit_answer(
                        &q.question,
                        &q.exact_answer,
                        ctx.client,
                        &ctx.hint_prompts,
                        &ctx.params,
                    )?;
                    Ok(if outcome.status == GenerationStatus::AnswerNotFound {
                        Step::Drop(rejection(&q.q_id, "answer_not_found"))
                    } else {
                        Step::Keep(GeneratedRow {
                            question: q,
                            outcome,
                        })
                    })
                })
                .collect();
            let (kept, dropped) = split(steps?);
            (Rows::Generated(kept), dropped)
        }
        (Stage::Verify, Rows::Generated(gs)) => {
            let (kept, dropped) = split(
                gs.into_iter()
                    .map(|g| {
                        if g.outcome.status == GenerationStatus::Ok {
                            Step::Keep(g)
                        } else {
                            Step::Drop(rejection(&g.question.q_id, "answer_mismatch"))
                        }
                    })
                    .collect(),
            );
            (Rows::Generated(kept), dropped)
        }
        (Stage::Hints, Rows::Generated(gs)) => {
            let steps: Result<Vec<Step<QuestionRecord>>> = gs
                .into_par_iter()
                .map(|g| {
                    match request_hints(
                        &g.question.question,
                        ctx.client,
                        &ctx.hint_prompts,
                        &ctx.params,
                    ) {
                        Ok((raw, sources)) => Ok(Step::Keep(build_record(
                            g,
                            raw,
                            sources,
                            cfg.hints_per_question,
                        ))),
                        Err(e @ Error::Generation(_)) => Ok(Step::Drop(rejection(
                            &g.question.q_id,
                            format!("hint_generation_failed: {e}"),
                        ))),
                        Err(e) => Err(e),
                    }
                })
                .collect();
            let (kept, dropped) = split(steps?);
            (Rows::Records(kept), dropped)
        }
        (Stage::FilterHints, Rows::Records(rs)) => {
            let done: Result<Vec<(Step<QuestionRecord>, HintFilterCounts)>> = rs
                .into_par_iter()
                .map(|mut r| {
                    let n = r.hints.len();
                    let hints = std::mem::take(&mut r.hints);
                    match filter_hints(
                        hints,
                        &r.exact_answer,
                        &r.question,
                        cfg.similarity_threshold,
                        ctx.client,
                    ) {
                        Ok(out) => {
                            let c = HintFilterCounts {
                                input: n,
                                kept: out.kept.len(),
                                leaked: out
                                    .dropped
                                    .iter()
                                    .filter(|d| d.2 == DropReason::Leak)
                                    .count(),
                                rephrased: out
                                    .dropped
                                    .iter()
                                    .filter(|d| d.2 == DropReason::Rephrase)
                                    .count(),
                            };
                            r.hints = out.kept;
                            Ok((Step::Keep(r), c))
                        }
                        Err(e @ Error::UndefinedSimilarity(_)) => Ok((
                            Step::Drop(rejection(&r.q_id, format!("similarity_undefined: {e}"))),
                            HintFilterCounts::default(),
                        )),
                        Err(e) => Err(e),
                    }
                })
                .collect();
            let mut steps = Vec::new();
            for (s, c) in done? {
                hint_filter.input += c.input;
                hint_filter.kept += c.kept;
                hint_filter.leaked += c.leaked;
                hint_filter.rephrased += c.rephrased;
                steps.push(s);
            }
            let (kept, dropped) = split(steps);
            (Rows::Records(kept), dropped)
        }
        (Stage::Prune, Rows::Records(rs)) => {
            let (kept, short) = crate::hints::prune_questions(rs, cfg.min_hints);
            let dropped = short
                .iter()
                .map(|r| {
                    rejection(
                        &r.q_id,
                        format!(
                            "fewer_than_min_hints: {} < {}",
                            r.hints.len(),
                            cfg.min_hints
                        ),
                    )
                })
                .collect();
            (Rows::Records(kept), dropped)
        }
        (Stage::ScoreHicos, Rows::Records(rs)) => {
            let (out, notes) = score_each(rs, |r| {
                convergence::score_record(r, ctx.client, &ctx.convergence)
            })?;
            unscored = notes;
            (Rows::Records(out), Vec::new())
        }
        (Stage::ScoreHifas, Rows::Records(rs)) => {
            let (Some(extractor), Some(normalizer)) = (ctx.extractor, ctx.normalizer) else {
                return Err(Error::Config(
                    "familiarity scoring needs an entity extractor and a normalizer".into(),
                ));
            };
            let (out, notes) = score_each(rs, |r| {
                familiarity::score_record(
                    r,
                    extractor,
                    ctx.client,
                    ctx.client,
                    normalizer,
                    cfg.aggregate_mode,
                )
            })?;
            unscored = notes;
            (Rows::Records(out), Vec::new())
        }
        (stage, _) => return Err(wrong_rows(stage)),
    };
    let report = StageReport {
        stage,
        input,
        output: rows.len(),
        rejected: rejections.len(),
        rejections,
        unscored,
        cache: stats_delta(ctx.client.stats(), before),
    };
    log::info!(
        "{stage}: {} in, {} out, {} rejected",
        report.input,
        report.output,
        report.rejected
    );
    Ok(StageResult {
        rows,
        report,
        hint_filter,
    })
}

/// Opens the service client a config asks for: fixture replay when offline,
/// otherwise HTTP behind the response cache.
pub fn open_client(config: &PipelineConfig) -> Result<ServiceClient> {
    let opts = config.client_options();
    if config.offline {
        let fixture = config
            .fixture
            .as_deref()
            .ok_or_else(|| Error::Config("offline runs need a fixture path".into()))?;
        return Ok(ServiceClient::replay(fixture, opts)?);
    }
    let backend = HttpBackend::new(config.services.http.clone())?;
    Ok(ServiceClient::new(Arc::new(backend), opts)?)
}

pub fn load_normalizer(config: &PipelineConfig) -> Result<FamiliarityNormalizer> {
    if let Some(p) = &config.normalizer {
        return FamiliarityNormalizer::load(p);
    }
    let path = config
        .calibration_corpus
        .as_deref()
        .ok_or_else(|| Error::Config("set normalizer or calibration_corpus".into()))?;
    let views: Vec<f64> = familiarity::read_calibration(path)?
        .into_iter()
        .map(|e| e.mean_monthly_views)
        .collect();
    FamiliarityNormalizer::fit(&views)
}

/// Classifier, entity extractor and normalizer chosen by a config.
pub struct Components<'c> {
    classifier: Box<dyn QuestionClassifier + 'c>,
    extractor: Option<Box<dyn EntityExtractor + 'c>>,
    normalizer: Option<FamiliarityNormalizer>,
}

impl<'c> Components<'c> {
    /// The extractor and normalizer are loaded only when `familiarity` is set.
    pub fn build(
        config: &PipelineConfig,
        client: &'c ServiceClient,
        familiarity: bool,
    ) -> Result<Self> {
        let classifier: Box<dyn QuestionClassifier + 'c> = match config.classifier {
            ClassifierKind::Keyword => Box::new(KeywordClassifier),
            ClassifierKind::Llm => Box::new(LlmClassifier::new(client)),
        };
        let (extractor, normalizer) = if familiarity {
            let extractor: Box<dyn EntityExtractor + 'c> = match config.entity_extractor {
                ExtractorKind::Gazetteer => {
                    let path = config.gazetteer.as_deref().ok_or_else(|| {
                        Error::Config("the gazetteer extractor needs a gazetteer path".into())
                    })?;
                    Box::new(GazetteerExtractor::load(path)?)
                }
                ExtractorKind::Llm => Box::new(LlmEntityExtractor::new(client)),
            };
            (Some(extractor), Some(load_normalizer(config)?))
        } else {
            (None, None)
        };
        Ok(Components {
            classifier,
            extractor,
            normalizer,
        })
    }

    pub fn context<'a>(
        &'a self,
        config: &'a PipelineConfig,
        client: &'a ServiceClient,
    ) -> StageContext<'a> {
        StageContext {
            config,
            client,
            classifier: self.classifier.as_ref(),
            extractor: self.extractor.as_deref(),
            normalizer: self.normalizer.as_ref(),
            hint_prompts: config.hint_prompts(),
            convergence: config.convergence(),
            params: SamplingParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Continue from `checkpoint.json` in the output directory.
    pub resume: bool,
    /// Halt (with a checkpoint) once this stage has completed.
    pub stop_after: Option<Stage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Present once every stage has run.
    pub manifest: Option<Manifest>,
    pub last_stage: Option<Stage>,
    pub output_dir: PathBuf,
}

pub fn stage_path(out: &Path, stage: Stage) -> PathBuf {
    out.join("stages").join(stage.file_name())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    text.push('\n');
    jsonl::write_atomic(path, text.as_bytes())
}

/// Runs all stages over `config.input`, writing `stages/*.jsonl`,
/// `final.jsonl`, `stats.json` and `manifest.json` under the output
/// directory. A failing stage leaves the checkpoint of the last completed
/// one in place.
pub fn run_pipeline(
    config: &PipelineConfig,
    client: &ServiceClient,
    options: RunOptions,
) -> Result<RunSummary> {
    config.validate()?;
    let out = config.output_dir.clone();
    std::fs::create_dir_all(out.join("stages")).map_err(|e| Error::io(&out, e))?;
    let checkpoint_path = out.join("checkpoint.json");
    let digest = config.digest();

    let mut checkpoint = Checkpoint {
        config_digest: digest.clone(),
        completed: Vec::new(),
        hint_filter: HintFilterCounts::default(),
    };
    let mut rows = None;
    if options.resume && checkpoint_path.exists() {
        let text = std::fs::read_to_string(&checkpoint_path)
            .map_err(|e| Error::io(&checkpoint_path, e))?;
        let saved: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("{}: {e}", checkpoint_path.display())))?;
        if saved.config_digest != digest {
            return Err(Error::Config(format!(
                "checkpoint was written by config {}, not {digest}",
                saved.config_digest
            )));
        }
        if let Some(last) = saved.last() {
            rows = Some(Rows::read(last, &stage_path(&out, last))?);
            log::info!("resuming after {last}");
        }
        checkpoint = saved;
    } else if checkpoint_path.exists() {
        std::fs::remove_file(&checkpoint_path).map_err(|e| Error::io(&checkpoint_path, e))?;
    }
    let mut rows = match rows {
        Some(r) => r,
        None => Rows::Raw(jsonl::read(&config.input)?),
    };

    let parts = Components::build(config, client, true)?;
    let ctx = parts.context(config, client);

    let start = checkpoint.last().map_or(0, |s| s.index() + 1);
    for &stage in &Stage::ALL[start..] {
        let result = run_stage(stage, rows, &ctx)?;
        result.rows.write(&stage_path(&out, stage))?;
        rows = result.rows;
        checkpoint.completed.push(result.report);
        let h = &mut checkpoint.hint_filter;
        h.input += result.hint_filter.input;
        h.kept += result.hint_filter.kept;
        h.leaked += result.hint_filter.leaked;
        h.rephrased += result.hint_filter.rephrased;
        write_json(&checkpoint_path, &checkpoint)?;
        if options.stop_after == Some(stage) && stage != Stage::ScoreHifas {
            return Ok(RunSummary {
                manifest: None,
                last_stage: Some(stage),
                output_dir: out,
            });
        }
    }

    let records = rows.into_records()?;
    let rules = FinalRules {
        min_hints: config.min_hints,
        similarity_threshold: config.similarity_threshold,
    };
    for r in &records {
        r.validate_final(&rules)?;
    }
    write_dataset(&out.join("final.jsonl"), &records)?;
    if !records.is_empty() {
        write_json(&out.join("stats.json"), &dataset_stats(&records)?)?;
    }
    let manifest = Manifest {
        config_digest: digest,
        cache: CacheSummary::from_stages(&checkpoint.completed),
        stages: checkpoint.completed,
        hint_filter: checkpoint.hint_filter,
        final_count: records.len(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(RunSummary {
        manifest: Some(manifest),
        last_stage: Some(Stage::ScoreHifas),
        output_dir: out,
    })
}
