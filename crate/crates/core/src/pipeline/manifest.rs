//! Run accounting written next to the final dataset.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::services::ClientStats;

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Filter,
    Classify,
    Sample,
    Generate,
    Verify,
    Hints,
    FilterHints,
    Prune,
    ScoreHicos,
    ScoreHifas,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Filter,
        Stage::Classify,
        Stage::Sample,
        Stage::Generate,
        Stage::Verify,
        Stage::Hints,
        Stage::FilterHints,
        Stage::Prune,
        Stage::ScoreHicos,
        Stage::ScoreHifas,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Filter => "filter",
            Stage::Classify => "classify",
            Stage::Sample => "sample",
            Stage::Generate => "generate",
            Stage::Verify => "verify",
            Stage::Hints => "hints",
            Stage::FilterHints => "filter_hints",
            Stage::Prune => "prune",
            Stage::ScoreHicos => "score_hicos",
            Stage::ScoreHifas => "score_hifas",
        }
    }

    pub fn index(self) -> usize {
        Stage::ALL.iter().position(|s| *s == self).expect("listed")
    }

    /// Intermediate file name, e.g. `03_sample.jsonl`.
    pub fn file_name(self) -> String {
        format!("{:02}_{}.jsonl", self.index() + 1, self.as_str())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.replace('-', "_");
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub q_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub input: usize,
    pub output: usize,
    pub rejected: usize,
    pub rejections: Vec<Rejection>,
    /// Records passed on unscored because a metric could not be computed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unscored: Vec<Rejection>,
    /// Service traffic during this stage.
    pub cache: ClientStats,
}

impl StageReport {
    pub fn balanced(&self) -> bool {
        self.input == self.output + self.rejected && self.rejected == self.rejections.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintFilterCounts {
    pub input: usize,
    pub kept: usize,
    pub leaked: usize,
    pub rephrased: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheSummary {
    pub requests: u64,
    pub cache_hits: u64,
    pub backend_calls: u64,
    pub hit_rate: f64,
}

impl CacheSummary {
    pub fn from_stages(stages: &[StageReport]) -> Self {
        let mut s = ClientStats::default();
        for st in stages {
            s.requests += st.cache.requests;
            s.cache_hits += st.cache.cache_hits;
            s.backend_calls += st.cache.backend_calls;
        }
        CacheSummary {
            requests: s.requests,
            cache_hits: s.cache_hits,
            backend_calls: s.backend_calls,
            hit_rate: if s.requests == 0 {
                0.0
            } else {
                s.cache_hits as f64 / s.requests as f64
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_digest: String,
    pub stages: Vec<StageReport>,
    pub hint_filter: HintFilterCounts,
    pub cache: CacheSummary,
    pub final_count: usize,
}

impl Manifest {
    pub fn balanced(&self) -> bool {
        self.stages.iter().all(StageReport::balanced)
            && self.stages.windows(2).all(|w| w[0].output == w[1].input)
            && self
                .stages
                .last()
                .is_none_or(|s| s.output == self.final_count)
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

/// Progress saved after every completed stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_digest: String,
    pub completed: Vec<StageReport>,
    pub hint_filter: HintFilterCounts,
}

impl Checkpoint {
    pub fn last(&self) -> Option<Stage> {
        self.completed.last().map(|s| s.stage)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
        }
        assert_eq!("filter-hints".parse::<Stage>().unwrap(), Stage::FilterHints);
        assert_eq!(Stage::Prune.file_name(), "08_prune.jsonl");
        assert!("stats".parse::<Stage>().is_err());
    }

    #[test]
    fn hit_rate() {
        let st = |r, h| StageReport {
            stage: Stage::Filter,
            input: 0,
            output: 0,
            rejected: 0,
            rejections: vec![],
            unscored: vec![],
            cache: ClientStats {
                requests: r,
                cache_hits: h,
                backend_calls: r - h,
            },
        };
        let c = CacheSummary::from_stages(&[st(3, 1), st(1, 1)]);
        assert_eq!((c.requests, c.cache_hits, c.hit_rate), (4, 2, 0.5));
        assert_eq!(CacheSummary::from_stages(&[]).hit_rate, 0.0);
    }
}
