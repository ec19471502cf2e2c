//! Run configuration: a TOML file plus `HINTGEN_*` environment overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::convergence::{CANDIDATES_PROMPT, DEFAULT_CANDIDATES, JUDGE_PROMPT};
use crate::error::{Error, Result};
use crate::familiarity::AggregateMode;
use crate::hints::HintPrompts;
use crate::record::{DEFAULT_MIN_HINTS, DEFAULT_SIMILARITY_THRESHOLD};
use crate::services::http::HttpConfig;
use crate::services::ClientOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    #[default]
    Keyword,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    #[default]
    Gazetteer,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub chat_model: String,
    pub embed_model: String,
    pub parallelism: usize,
    pub retries: u32,
    pub backoff_ms: u64,
    #[serde(flatten)]
    pub http: HttpConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let o = ClientOptions::default();
        ServiceConfig {
            chat_model: o.chat_model,
            embed_model: o.embed_model,
            parallelism: o.parallelism,
            retries: o.retries,
            backoff_ms: o.backoff.as_millis() as u64,
            http: HttpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub answer: String,
    pub hints: String,
    pub candidates: String,
    pub judge: String,
}

impl Default for PromptConfig {
    fn default() -> Self {
        let h = HintPrompts::default();
        PromptConfig {
            answer: h.answer_template,
            hints: h.hint_template,
            candidates: CANDIDATES_PROMPT.into(),
            judge: JUDGE_PROMPT.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// JSONL of `{Q_ID, Question, ExactAnswer[, MajorType, MinorType]}`.
    pub input: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub sample_fraction: f64,
    pub similarity_threshold: f64,
    pub hints_per_question: usize,
    pub min_hints: usize,
    pub candidate_count: usize,
    pub aggregate_mode: AggregateMode,
    pub classifier: ClassifierKind,
    pub entity_extractor: ExtractorKind,
    /// Answer only from `fixture`; no network access.
    pub offline: bool,
    pub fixture: Option<PathBuf>,
    /// Response cache for live runs (same format as fixtures).
    pub cache: Option<PathBuf>,
    /// Fitted normalizer JSON. Takes precedence over `calibration_corpus`.
    pub normalizer: Option<PathBuf>,
    /// JSONL of `{title, mean_monthly_views}` to fit the normalizer from.
    pub calibration_corpus: Option<PathBuf>,
    /// JSONL of `{surface, title}` for the gazetteer extractor.
    pub gazetteer: Option<PathBuf>,
    pub services: ServiceConfig,
    pub prompts: PromptConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: PathBuf::from("questions.jsonl"),
            output_dir: PathBuf::from("out"),
            seed: 0,
            sample_fraction: 1.0,
            similarity_threshold: DEFAULT_SIMILARITY_THRESHOLD,
            hints_per_question: 10,
            min_hints: DEFAULT_MIN_HINTS,
            candidate_count: DEFAULT_CANDIDATES,
            aggregate_mode: AggregateMode::Avg,
            classifier: ClassifierKind::Keyword,
            entity_extractor: ExtractorKind::Gazetteer,
            offline: false,
            fixture: None,
            cache: None,
            normalizer: None,
            calibration_corpus: None,
            gazetteer: None,
            services: ServiceConfig::default(),
            prompts: PromptConfig::default(),
        }
    }
}

fn env_parse<T: std::str::FromStr>(
    get: &dyn Fn(&str) -> Option<String>,
    key: &str,
    slot: &mut T,
) -> Result<()> {
    if let Some(v) = get(key) {
        *slot = v
            .parse()
            .map_err(|_| Error::Config(format!("{key}={v:?} is not valid")))?;
    }
    Ok(())
}

impl PipelineConfig {
    /// Reads a TOML file. Relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.input);
        fix(&mut self.output_dir);
        for p in [
            &mut self.fixture,
            &mut self.cache,
            &mut self.normalizer,
            &mut self.calibration_corpus,
            &mut self.gazetteer,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Applies `HINTGEN_*` variables from the process environment.
    pub fn apply_env(&mut self) -> Result<()> {
        self.apply_env_from(&|k| std::env::var(k).ok())
    }

    pub fn apply_env_from(&mut self, get: &dyn Fn(&str) -> Option<String>) -> Result<()> {
        env_parse(get, "HINTGEN_SEED", &mut self.seed)?;
        env_parse(get, "HINTGEN_OFFLINE", &mut self.offline)?;
        env_parse(get, "HINTGEN_PARALLELISM", &mut self.services.parallelism)?;
        env_parse(get, "HINTGEN_CHAT_MODEL", &mut self.services.chat_model)?;
        env_parse(get, "HINTGEN_EMBED_MODEL", &mut self.services.embed_model)?;
        env_parse(
            get,
            "HINTGEN_CHAT_BASE_URL",
            &mut self.services.http.chat_base_url,
        )?;
        env_parse(
            get,
            "HINTGEN_EMBED_BASE_URL",
            &mut self.services.http.embed_base_url,
        )?;
        if let Some(v) = get("HINTGEN_FIXTURE") {
            self.fixture = Some(PathBuf::from(v));
        }
        if let Some(v) = get("HINTGEN_CACHE") {
            self.cache = Some(PathBuf::from(v));
        }
        Ok(())
    }

    /// Full check for an end-to-end run.
    pub fn validate(&self) -> Result<()> {
        self.validate_stages(true)
    }

    /// Checks what the selected stages need; familiarity inputs are only
    /// required when `familiarity` is set.
    pub fn validate_stages(&self, familiarity: bool) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return bad(format!(
                "sample_fraction {} outside (0, 1]",
                self.sample_fraction
            ));
        }
        if !(-1.0..=1.0).contains(&self.similarity_threshold) {
            return bad(format!(
                "similarity_threshold {} outside [-1, 1]",
                self.similarity_threshold
            ));
        }
        if self.hints_per_question == 0
            || self.candidate_count == 0
            || self.services.parallelism == 0
        {
            return bad(
                "hints_per_question, candidate_count and parallelism must be positive".into(),
            );
        }
        if self.min_hints > self.hints_per_question {
            return bad(format!(
                "min_hints {} exceeds hints_per_question {}",
                self.min_hints, self.hints_per_question
            ));
        }
        if self.offline && self.fixture.is_none() {
            return bad("offline runs need a fixture path".into());
        }
        if !familiarity {
            return Ok(());
        }
        if self.normalizer.is_none() && self.calibration_corpus.is_none() {
            return bad("set normalizer or calibration_corpus".into());
        }
        if self.entity_extractor == ExtractorKind::Gazetteer && self.gazetteer.is_none() {
            return bad("the gazetteer extractor needs a gazetteer path".into());
        }
        Ok(())
    }

    /// SHA-256 over the settings that shape the output. Output location and
    /// transport tuning are left out so a moved or retuned run keeps its
    /// digest.
    pub fn digest(&self) -> String {
        let mut shaping = self.clone();
        shaping.output_dir = PathBuf::new();
        shaping.cache = None;
        shaping.services.parallelism = 0;
        shaping.services.retries = 0;
        shaping.services.backoff_ms = 0;
        shaping.services.http.timeout_secs = 0;
        let strip = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                *x = PathBuf::from(x.file_name().unwrap_or_default());
            }
        };
        shaping.input = PathBuf::from(self.input.file_name().unwrap_or_default());
        strip(&mut shaping.fixture);
        strip(&mut shaping.normalizer);
        strip(&mut shaping.calibration_corpus);
        strip(&mut shaping.gazetteer);
        let json = serde_json::to_string(&shaping).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn client_options(&self) -> ClientOptions {
        ClientOptions {
            chat_model: self.services.chat_model.clone(),
            embed_model: self.services.embed_model.clone(),
            parallelism: self.services.parallelism,
            retries: self.services.retries,
            backoff: Duration::from_millis(self.services.backoff_ms),
            cache_file: self.cache.clone(),
        }
    }

    pub fn hint_prompts(&self) -> HintPrompts {
        HintPrompts {
            answer_template: self.prompts.answer.clone(),
            hint_template: self.prompts.hints.clone(),
            hint_count: self.hints_per_question,
        }
    }

    pub fn convergence(&self) -> crate::convergence::ConvergenceConfig {
        crate::convergence::ConvergenceConfig {
            n_max: self.candidate_count,
            candidates_template: self.prompts.candidates.clone(),
            judge_template: self.prompts.judge.clone(),
            ..Default::default()
        }
    }
}
