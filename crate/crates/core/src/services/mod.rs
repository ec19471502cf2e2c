//! Remote dependencies: chat completion, sentence embeddings, Wikipedia
//! pageviews and title resolution.
//!
//! Every call is described by a [`ServiceRequest`] whose SHA-256 digest keys a
//! write-once response cache. A [`Backend`] answers cache misses; the HTTP
//! backend talks to real endpoints while [`replay::ReplayBackend`] answers
//! purely from a recorded fixture file.

pub mod http;
pub mod limiter;
pub mod replay;

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub use limiter::Limiter;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ServiceError {
    #[error("transport error: {message}")]
    Transport { message: String, retryable: bool },

    #[error("no fixture entry for {kind} request {digest}")]
    FixtureMissing { digest: String, kind: String },

    #[error("corrupt fixture entry {digest}: {reason}")]
    FixtureCorrupt { digest: String, reason: String },

    #[error("no Wikipedia article {title:?}")]
    ArticleMissing { title: String },

    #[error("unexpected response: {0}")]
    BadResponse(String),

    #[error("{0}")]
    Io(String),
}

impl ServiceError {
    pub fn transport(message: impl Into<String>) -> Self {
        ServiceError::Transport {
            message: message.into(),
            retryable: true,
        }
    }

    fn is_retryable(&self) -> bool {
        matches!(
            self,
            ServiceError::Transport {
                retryable: true,
                ..
            }
        )
    }
}

/// Decoding parameters sent with a chat request.
///
/// `attempt` only enters the request digest, so a retried prompt is a
/// distinct cache entry instead of a replay of the rejected response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub attempt: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: None,
            attempt: 0,
        }
    }
}

impl SamplingParams {
    pub fn retry(&self, attempt: u32) -> Self {
        SamplingParams {
            attempt,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ServiceRequest {
    Chat {
        model: String,
        prompt: String,
        params: SamplingParams,
    },
    Embed {
        model: String,
        text: String,
    },
    Pageviews {
        title: String,
        start: String,
        end: String,
    },
    Resolve {
        title: String,
    },
}

impl ServiceRequest {
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceRequest::Chat { .. } => "chat",
            ServiceRequest::Embed { .. } => "embed",
            ServiceRequest::Pageviews { .. } => "pageviews",
            ServiceRequest::Resolve { .. } => "resolve",
        }
    }

    /// Hex SHA-256 of the request's canonical JSON encoding.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("request serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// Calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: u16,
    pub month: u8,
}

impl YearMonth {
    pub const fn new(year: u16, month: u8) -> Self {
        YearMonth { year, month }
    }

    /// First and last month of the pageview window.
    pub const WINDOW_START: YearMonth = YearMonth::new(2015, 1);
    pub const WINDOW_END: YearMonth = YearMonth::new(2023, 12);

    fn from_yyyymmdd(s: &str) -> Result<Self, ServiceError> {
        if s.len() < 8 || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ServiceError::BadResponse(format!("bad date {s:?}")));
        }
        let year: u16 = s[0..4].parse().unwrap();
        let month: u8 = s[4..6].parse().unwrap();
        if !(1..=12).contains(&month) {
            return Err(ServiceError::BadResponse(format!("bad month in {s:?}")));
        }
        Ok(YearMonth { year, month })
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| format!("bad month {s:?}"))?;
        let year = y.parse().map_err(|_| format!("bad year in {s:?}"))?;
        let month: u8 = m.parse().map_err(|_| format!("bad month in {s:?}"))?;
        if y.len() != 4 || m.len() != 2 || !(1..=12).contains(&month) {
            return Err(format!("bad month {s:?}"));
        }
        Ok(YearMonth { year, month })
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonthCount {
    pub month: YearMonth,
    pub views: u64,
}

/// A fetched response, as stored in caches and fixtures.
#[derive(Debug, Clone, PartialEq)]
pub enum ServiceResponse {
    Text(String),
    Vector(Vec<f64>),
    Months(Vec<MonthCount>),
    /// Page-view lookup for an article that does not exist.
    NoArticle,
    Title(Option<String>),
}

impl ServiceResponse {
    pub fn to_json(&self) -> Value {
        match self {
            ServiceResponse::Text(t) => Value::String(t.clone()),
            ServiceResponse::Vector(v) => serde_json::to_value(v).expect("finite vector"),
            ServiceResponse::Months(m) => serde_json::to_value(m).expect("months serialize"),
            ServiceResponse::NoArticle => Value::Null,
            ServiceResponse::Title(t) => serde_json::to_value(t).expect("title serializes"),
        }
    }

    pub fn from_json(kind: &str, value: Value) -> Result<Self, String> {
        match kind {
            "chat" => match value {
                Value::String(s) => Ok(ServiceResponse::Text(s)),
                other => Err(format!("chat response must be a string, got {other}")),
            },
            "embed" => {
                let v: Vec<f64> = serde_json::from_value(value).map_err(|e| e.to_string())?;
                if v.is_empty() {
                    return Err("empty embedding".into());
                }
                Ok(ServiceResponse::Vector(v))
            }
            "pageviews" => match value {
                Value::Null => Ok(ServiceResponse::NoArticle),
                other => serde_json::from_value(other)
                    .map(ServiceResponse::Months)
                    .map_err(|e| e.to_string()),
            },
            "resolve" => serde_json::from_value(value)
                .map(ServiceResponse::Title)
                .map_err(|e| e.to_string()),
            other => Err(format!("unknown kind {other:?}")),
        }
    }
}

/// One line of a cache or fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub digest: String,
    pub kind: String,
    pub response: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<ServiceRequest>,
}

/// Answers cache misses.
pub trait Backend: Send + Sync {
    fn fetch(&self, request: &ServiceRequest) -> Result<ServiceResponse, ServiceError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTranscript {
    pub prompt: String,
    pub response: String,
    pub model_id: String,
    pub request_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ServiceError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(ServiceError::BadResponse(
                "embedding must be nonempty and finite".into(),
            ));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientStats {
    pub requests: u64,
    pub cache_hits: u64,
    pub backend_calls: u64,
}

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub chat_model: String,
    pub embed_model: String,
    pub parallelism: usize,
    pub retries: u32,
    pub backoff: Duration,
    /// Append-only cache file; `None` keeps the cache in memory only.
    pub cache_file: Option<PathBuf>,
}

impl Default for ClientOptions {
    fn default() -> Self {
        ClientOptions {
            chat_model: "default-chat".into(),
            embed_model: "default-embed".into(),
            parallelism: 4,
            retries: 3,
            backoff: Duration::from_millis(250),
            cache_file: None,
        }
    }
}

/// Cached, rate-limited access to a [`Backend`]. Shareable across threads.
pub struct ServiceClient {
    backend: Arc<dyn Backend>,
    options: ClientOptions,
    limiter: Limiter,
    cache: RwLock<HashMap<String, ServiceResponse>>,
    inflight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    writer: Option<Mutex<File>>,
    embed_dim: OnceLock<usize>,
    requests: AtomicU64,
    hits: AtomicU64,
    calls: AtomicU64,
}

impl ServiceClient {
    pub fn new(backend: Arc<dyn Backend>, options: ClientOptions) -> Result<Self, ServiceError> {
        let mut cache = HashMap::new();
        let writer = match &options.cache_file {
            Some(path) => {
                if path.exists() {
                    for entry in replay::load_entries(path)? {
                        let response = ServiceResponse::from_json(&entry.kind, entry.response)
                            .map_err(|reason| ServiceError::FixtureCorrupt {
                                digest: entry.digest.clone(),
                                reason,
                            })?;
                        cache.entry(entry.digest).or_insert(response);
                    }
                }
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    std::fs::create_dir_all(parent).map_err(|e| ServiceError::Io(e.to_string()))?;
                }
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| ServiceError::Io(format!("{}: {e}", path.display())))?;
                Some(Mutex::new(file))
            }
            None => None,
        };
        Ok(ServiceClient {
            backend,
            limiter: Limiter::new(options.parallelism),
            options,
            cache: RwLock::new(cache),
            inflight: Mutex::new(HashMap::new()),
            writer,
            embed_dim: OnceLock::new(),
            requests: AtomicU64::new(0),
            hits: AtomicU64::new(0),
            calls: AtomicU64::new(0),
        })
    }

    /// Client answering only from a fixture file; never touches the network.
    pub fn replay(fixture: &Path, options: ClientOptions) -> Result<Self, ServiceError> {
        let backend = replay::ReplayBackend::load(fixture)?;
        ServiceClient::new(
            Arc::new(backend),
            ClientOptions {
                cache_file: None,
                ..options
            },
        )
    }

    pub fn options(&self) -> &ClientOptions {
        &self.options
    }

    pub fn stats(&self) -> ClientStats {
        ClientStats {
            requests: self.requests.load(Ordering::SeqCst),
            cache_hits: self.hits.load(Ordering::SeqCst),
            backend_calls: self.calls.load(Ordering::SeqCst),
        }
    }

    /// Single-flight, write-once lookup: each digest reaches the backend at
    /// most once per cache.
    pub fn execute(&self, request: &ServiceRequest) -> Result<ServiceResponse, ServiceError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let digest = request.digest();
        if let Some(hit) = self.cached(&digest) {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit);
        }
        let slot = {
            let mut inflight = self.inflight.lock().expect("inflight poisoned");
            inflight.entry(digest.clone()).or_default().clone()
        };
        let _guard = slot.lock().expect("slot poisoned");
        if let Some(hit) = self.cached(&digest) {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit);
        }
        let response = self.fetch_with_retry(request)?;
        self.store(&digest, request, &response)?;
        Ok(response)
    }

    fn cached(&self, digest: &str) -> Option<ServiceResponse> {
        self.cache
            .read()
            .expect("cache poisoned")
            .get(digest)
            .cloned()
    }

    fn fetch_with_retry(&self, request: &ServiceRequest) -> Result<ServiceResponse, ServiceError> {
        let mut attempt = 0;
        loop {
            let result = {
                let _permit = self.limiter.acquire();
                self.calls.fetch_add(1, Ordering::SeqCst);
                self.backend.fetch(request)
            };
            match result {
                Err(e) if e.is_retryable() && attempt < self.options.retries => {
                    attempt += 1;
                    log::warn!("{} request failed (attempt {attempt}): {e}", request.kind());
                    std::thread::sleep(self.options.backoff * 2u32.pow(attempt - 1));
                }
                other => return other,
            }
        }
    }

    fn store(
        &self,
        digest: &str,
        request: &ServiceRequest,
        response: &ServiceResponse,
    ) -> Result<(), ServiceError> {
        if let Some(writer) = &self.writer {
            let entry = FixtureEntry {
                digest: digest.to_owned(),
                kind: request.kind().to_owned(),
                response: response.to_json(),
                request: Some(request.clone()),
            };
            let mut line =
                serde_json::to_string(&entry).map_err(|e| ServiceError::Io(e.to_string()))?;
            line.push('\n');
            let mut f = writer.lock().expect("cache writer poisoned");
            f.write_all(line.as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| ServiceError::Io(e.to_string()))?;
        }
        self.cache
            .write()
            .expect("cache poisoned")
            .insert(digest.to_owned(), response.clone());
        Ok(())
    }

    pub fn chat(
        &self,
        prompt: &str,
        params: &SamplingParams,
    ) -> Result<ChatTranscript, ServiceError> {
        let request = ServiceRequest::Chat {
            model: self.options.chat_model.clone(),
            prompt: prompt.to_owned(),
            params: params.clone(),
        };
        let digest = request.digest();
        match self.execute(&request)? {
            ServiceResponse::Text(response) => Ok(ChatTranscript {
                prompt: prompt.to_owned(),
                response,
                model_id: self.options.chat_model.clone(),
                request_digest: digest,
            }),
            other => Err(ServiceError::BadResponse(format!(
                "chat returned {other:?}"
            ))),
        }
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, ServiceError> {
        let request = ServiceRequest::Embed {
            model: self.options.embed_model.clone(),
            text: text.to_owned(),
        };
        let ServiceResponse::Vector(values) = self.execute(&request)? else {
            return Err(ServiceError::BadResponse(
                "embed returned a non-vector".into(),
            ));
        };
        let v = EmbeddingVector::new(values)?;
        let dim = *self.embed_dim.get_or_init(|| v.dim());
        if dim != v.dim() {
            return Err(ServiceError::BadResponse(format!(
                "embedding dimension {} differs from {dim}",
                v.dim()
            )));
        }
        Ok(v)
    }

    /// Monthly views for `title` between two `YYYYMMDD` dates, clipped to the
    /// 2015-01..2023-12 window. Months without data are omitted.
    pub fn monthly_pageviews(
        &self,
        title: &str,
        start: &str,
        end: &str,
    ) -> Result<Vec<MonthCount>, ServiceError> {
        let from = YearMonth::from_yyyymmdd(start)?;
        let to = YearMonth::from_yyyymmdd(end)?;
        if from > to {
            return Err(ServiceError::BadResponse(format!(
                "start {start} after end {end}"
            )));
        }
        let title = canonical_title(title);
        let request = ServiceRequest::Pageviews {
            title: title.clone(),
            start: start.to_owned(),
            end: end.to_owned(),
        };
        match self.execute(&request)? {
            ServiceResponse::Months(months) => {
                let lo = from.max(YearMonth::WINDOW_START);
                let hi = to.min(YearMonth::WINDOW_END);
                let mut months: Vec<MonthCount> = months
                    .into_iter()
                    .filter(|m| m.month >= lo && m.month <= hi)
                    .collect();
                months.sort_by_key(|m| m.month);
                months.dedup_by_key(|m| m.month);
                Ok(months)
            }
            ServiceResponse::NoArticle => Err(ServiceError::ArticleMissing { title }),
            other => Err(ServiceError::BadResponse(format!(
                "pageviews returned {other:?}"
            ))),
        }
    }

    /// Resolves a title to its Wikipedia article (following one redirect);
    /// `None` when no article exists.
    pub fn resolve_title(&self, title: &str) -> Result<Option<String>, ServiceError> {
        let request = ServiceRequest::Resolve {
            title: canonical_title(title),
        };
        match self.execute(&request)? {
            ServiceResponse::Title(t) => Ok(t),
            other => Err(ServiceError::BadResponse(format!(
                "resolve returned {other:?}"
            ))),
        }
    }
}

/// Prompt in, reply text out. Implemented by [`ServiceClient`] and by test
/// doubles.
pub trait Chat: Sync {
    fn chat(&self, prompt: &str, params: &SamplingParams) -> Result<String, ServiceError>;
}

impl Chat for ServiceClient {
    fn chat(&self, prompt: &str, params: &SamplingParams) -> Result<String, ServiceError> {
        ServiceClient::chat(self, prompt, params).map(|t| t.response)
    }
}

/// Wikipedia titles use underscores for spaces.
pub fn canonical_title(title: &str) -> String {
    title.split_whitespace().collect::<Vec<_>>().join("_")
}
