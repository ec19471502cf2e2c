//! JSON-over-HTTP backend for live runs.

use std::time::Duration;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, MonthCount, ServiceError, ServiceRequest, ServiceResponse, YearMonth};

/// Everything but RFC 3986 unreserved characters is escaped, including `/`.
const TITLE_ESCAPES: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~');

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// OpenAI-compatible base URL; `/chat/completions` is appended.
    pub chat_base_url: String,
    /// OpenAI-compatible base URL; `/embeddings` is appended.
    pub embed_base_url: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub pageviews_base_url: String,
    pub wiki_api_url: String,
    pub user_agent: String,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            chat_base_url: "http://localhost:8000/v1".into(),
            embed_base_url: "http://localhost:8000/v1".into(),
            api_key_env: "HINTGEN_API_KEY".into(),
            pageviews_base_url: "https://wikimedia.org/api/rest_v1".into(),
            wiki_api_url: "https://en.wikipedia.org/w/api.php".into(),
            user_agent: concat!("hintgen/", env!("CARGO_PKG_VERSION")).into(),
            timeout_secs: 60,
        }
    }
}

/// `/metrics/pageviews/per-article/en.wikipedia/all-access/user/{title}/monthly/{start}/{end}`
pub fn pageview_path(title: &str, start: &str, end: &str) -> String {
    let title = utf8_percent_encode(&super::canonical_title(title), TITLE_ESCAPES).to_string();
    format!(
        "/metrics/pageviews/per-article/en.wikipedia/all-access/user/{title}/monthly/{start}/{end}"
    )
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    token: Option<String>,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, ServiceError> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(config.user_agent.clone())
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ServiceError::transport(e.to_string()))?;
        let token = std::env::var(&config.api_key_env)
            .ok()
            .filter(|t| !t.is_empty());
        Ok(HttpBackend {
            config,
            client,
            token,
        })
    }

    fn send(
        &self,
        builder: reqwest::blocking::RequestBuilder,
    ) -> Result<(u16, Value), ServiceError> {
        let builder = match &self.token {
            Some(t) => builder.bearer_auth(t),
            None => builder,
        };
        let resp = builder
            .send()
            .map_err(|e| ServiceError::transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(ServiceError::transport(format!("HTTP {status}")));
        }
        let body: Value = if status == 404 {
            Value::Null
        } else {
            resp.json()
                .map_err(|e| ServiceError::BadResponse(format!("HTTP {status}: {e}")))?
        };
        if status >= 400 && status != 404 {
            return Err(ServiceError::Transport {
                message: format!("HTTP {status}: {body}"),
                retryable: false,
            });
        }
        Ok((status, body))
    }

    fn chat(
        &self,
        model: &str,
        prompt: &str,
        params: &super::SamplingParams,
    ) -> Result<ServiceResponse, ServiceError> {
        let mut body = json!({
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "top_p": params.top_p,
        });
        if let Some(max) = params.max_tokens {
            body["max_tokens"] = json!(max);
        }
        let url = format!(
            "{}/chat/completions",
            self.config.chat_base_url.trim_end_matches('/')
        );
        let (status, value) = self.send(self.client.post(url).json(&body))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| ServiceResponse::Text(s.to_owned()))
            .ok_or_else(|| ServiceError::BadResponse(format!("HTTP {status}: no message content")))
    }

    fn embed(&self, model: &str, text: &str) -> Result<ServiceResponse, ServiceError> {
        let url = format!(
            "{}/embeddings",
            self.config.embed_base_url.trim_end_matches('/')
        );
        let (status, value) = self.send(
            self.client
                .post(url)
                .json(&json!({"model": model, "input": text})),
        )?;
        let values: Vec<f64> = serde_json::from_value(value["data"][0]["embedding"].clone())
            .map_err(|e| ServiceError::BadResponse(format!("HTTP {status}: {e}")))?;
        Ok(ServiceResponse::Vector(values))
    }

    fn pageviews(
        &self,
        title: &str,
        start: &str,
        end: &str,
    ) -> Result<ServiceResponse, ServiceError> {
        let url = format!(
            "{}{}",
            self.config.pageviews_base_url.trim_end_matches('/'),
            pageview_path(title, start, end)
        );
        let (status, value) = self.send(self.client.get(url))?;
        if status == 404 {
            return Ok(ServiceResponse::NoArticle);
        }
        parse_pageview_items(&value).map(ServiceResponse::Months)
    }

    fn resolve(&self, title: &str) -> Result<ServiceResponse, ServiceError> {
        let url = format!(
            "{}?action=query&format=json&redirects=1&titles={}",
            self.config.wiki_api_url,
            utf8_percent_encode(title, TITLE_ESCAPES)
        );
        let (_, value) = self.send(self.client.get(url))?;
        Ok(ServiceResponse::Title(parse_resolution(&value)))
    }
}

impl Backend for HttpBackend {
    fn fetch(&self, request: &ServiceRequest) -> Result<ServiceResponse, ServiceError> {
        match request {
            ServiceRequest::Chat {
                model,
                prompt,
                params,
            } => self.chat(model, prompt, params),
            ServiceRequest::Embed { model, text } => self.embed(model, text),
            ServiceRequest::Pageviews { title, start, end } => self.pageviews(title, start, end),
            ServiceRequest::Resolve { title } => self.resolve(title),
        }
    }
}

/// Parses `{"items": [{"timestamp": "2015070100", "views": 12}, ...]}`.
pub fn parse_pageview_items(value: &Value) -> Result<Vec<MonthCount>, ServiceError> {
    let items = value["items"]
        .as_array()
        .ok_or_else(|| ServiceError::BadResponse("pageviews: missing items".into()))?;
    items
        .iter()
        .map(|item| {
            let ts = item["timestamp"]
                .as_str()
                .ok_or_else(|| ServiceError::BadResponse("pageviews: missing timestamp".into()))?;
            let views = item["views"]
                .as_u64()
                .ok_or_else(|| ServiceError::BadResponse("pageviews: bad views".into()))?;
            Ok(MonthCount {
                month: YearMonth::from_yyyymmdd(ts)?,
                views,
            })
        })
        .collect()
}

/// Title of the first existing page in a `action=query&redirects=1` answer.
pub fn parse_resolution(value: &Value) -> Option<String> {
    let pages = value["query"]["pages"].as_object()?;
    pages
        .values()
        .find(|p| p.get("missing").is_none() && p.get("invalid").is_none())
        .and_then(|p| p["title"].as_str())
        .map(str::to_owned)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pageview_path_is_bit_exact() {
        assert_eq!(
            pageview_path("Albert Einstein", "20150101", "20231231"),
            "/metrics/pageviews/per-article/en.wikipedia/all-access/user/Albert_Einstein/monthly/20150101/20231231"
        );
        assert_eq!(
            pageview_path("AC/DC", "20150101", "20150131"),
            "/metrics/pageviews/per-article/en.wikipedia/all-access/user/AC%2FDC/monthly/20150101/20150131"
        );
        assert_eq!(
            pageview_path("Café (film)", "20150101", "20150131"),
            "/metrics/pageviews/per-article/en.wikipedia/all-access/user/Caf%C3%A9_%28film%29/monthly/20150101/20150131"
        );
    }

    #[test]
    fn parses_pageview_payload() {
        let v = json!({"items": [
            {"project": "en.wikipedia", "article": "India", "granularity": "monthly",
             "timestamp": "2015070100", "access": "all-access", "agent": "user", "views": 2685795},
            {"timestamp": "2015080100", "views": 7}
        ]});
        let months = parse_pageview_items(&v).unwrap();
        assert_eq!(months.len(), 2);
        assert_eq!(months[0].month, YearMonth::new(2015, 7));
        assert_eq!(months[0].views, 2685795);
        assert!(parse_pageview_items(&json!({})).is_err());
    }

    #[test]
    fn parses_resolution() {
        let found = json!({"query": {"redirects": [{"from": "USA", "to": "United States"}],
            "pages": {"3434750": {"pageid": 3434750, "ns": 0, "title": "United States"}}}});
        assert_eq!(parse_resolution(&found).as_deref(), Some("United States"));
        let missing =
            json!({"query": {"pages": {"-1": {"ns": 0, "title": "Asdfgh", "missing": ""}}}});
        assert_eq!(parse_resolution(&missing), None);
    }
}
