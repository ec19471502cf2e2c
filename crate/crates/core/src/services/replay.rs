//! Deterministic offline backend answering from recorded fixtures.
//!
//! Fixture files are JSONL, one `{digest, kind, response[, request]}` object
//! per line. Cache files written by [`super::ServiceClient`] use the same
//! layout, so any recorded run can be replayed.

use std::collections::HashMap;
use std::path::Path;

use super::{Backend, FixtureEntry, ServiceError, ServiceRequest, ServiceResponse};

pub fn load_entries(path: &Path) -> Result<Vec<FixtureEntry>, ServiceError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ServiceError::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str::<FixtureEntry>(line).map_err(|e| {
                // name the digest when the line is at least shaped like an entry
                let digest = serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("digest").and_then(|d| d.as_str()).map(str::to_owned))
                    .unwrap_or_else(|| format!("<line {}>", i + 1));
                ServiceError::FixtureCorrupt {
                    digest,
                    reason: e.to_string(),
                }
            })
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct ReplayBackend {
    entries: HashMap<String, ServiceResponse>,
}

impl ReplayBackend {
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        Self::from_entries(load_entries(path)?)
    }

    pub fn from_entries(entries: Vec<FixtureEntry>) -> Result<Self, ServiceError> {
        let mut map = HashMap::with_capacity(entries.len());
        for entry in entries {
            let corrupt = |reason: String| ServiceError::FixtureCorrupt {
                digest: entry.digest.clone(),
                reason,
            };
            if entry.digest.len() != 64 || !entry.digest.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(corrupt("digest is not 64 hex characters".into()));
            }
            if let Some(request) = &entry.request {
                if request.digest() != entry.digest {
                    return Err(corrupt("recorded request does not hash to digest".into()));
                }
                if request.kind() != entry.kind {
                    return Err(corrupt(format!(
                        "kind {} vs request {}",
                        entry.kind,
                        request.kind()
                    )));
                }
            }
            let response =
                ServiceResponse::from_json(&entry.kind, entry.response.clone()).map_err(corrupt)?;
            match map.get(&entry.digest) {
                Some(existing) if *existing != response => {
                    return Err(corrupt("conflicting duplicate entry".into()))
                }
                _ => {
                    map.insert(entry.digest, response);
                }
            }
        }
        Ok(ReplayBackend { entries: map })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn fetch(&self, request: &ServiceRequest) -> Result<ServiceResponse, ServiceError> {
        let digest = request.digest();
        self.entries
            .get(&digest)
            .cloned()
            .ok_or_else(|| ServiceError::FixtureMissing {
                digest,
                kind: request.kind().to_owned(),
            })
    }
}
