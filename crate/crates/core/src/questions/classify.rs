//! Question type detection over the TREC label set.
//!
//! Six TREC coarse classes fold into five: `ABBR` and `NUM` both become
//! [`MajorType::Other`], `DESC` stays [`MajorType::Description`] so callers
//! can exclude it.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::MajorType;
use crate::services::{SamplingParams, ServiceClient};

/// The 50 TREC fine-grained labels.
pub const FINE_LABELS: [&str; 50] = [
    "ABBR:abb",
    "ABBR:exp",
    "DESC:def",
    "DESC:desc",
    "DESC:manner",
    "DESC:reason",
    "ENTY:animal",
    "ENTY:body",
    "ENTY:color",
    "ENTY:cremat",
    "ENTY:currency",
    "ENTY:dismed",
    "ENTY:event",
    "ENTY:food",
    "ENTY:instru",
    "ENTY:lang",
    "ENTY:letter",
    "ENTY:other",
    "ENTY:plant",
    "ENTY:product",
    "ENTY:religion",
    "ENTY:sport",
    "ENTY:substance",
    "ENTY:symbol",
    "ENTY:techmeth",
    "ENTY:termeq",
    "ENTY:veh",
    "ENTY:word",
    "HUM:desc",
    "HUM:gr",
    "HUM:ind",
    "HUM:title",
    "LOC:city",
    "LOC:country",
    "LOC:mount",
    "LOC:other",
    "LOC:state",
    "NUM:code",
    "NUM:count",
    "NUM:date",
    "NUM:dist",
    "NUM:money",
    "NUM:ord",
    "NUM:other",
    "NUM:perc",
    "NUM:period",
    "NUM:speed",
    "NUM:size",
    "NUM:temp",
    "NUM:weight",
];

/// Coarse parent of a fine label, or `None` for unknown labels.
pub fn coarse_of(fine: &str) -> Option<MajorType> {
    if !FINE_LABELS.contains(&fine) {
        return None;
    }
    let prefix = fine.split(':').next()?;
    Some(match prefix {
        "HUM" => MajorType::Human,
        "ENTY" => MajorType::Entity,
        "LOC" => MajorType::Location,
        "DESC" => MajorType::Description,
        _ => MajorType::Other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTypeLabel {
    pub major: MajorType,
    pub minor: String,
    pub confidence: Option<f64>,
}

impl QuestionTypeLabel {
    pub fn from_fine(fine: &str, confidence: Option<f64>) -> Option<Self> {
        coarse_of(fine).map(|major| QuestionTypeLabel {
            major,
            minor: fine.to_owned(),
            confidence,
        })
    }
}

pub trait QuestionClassifier: Sync {
    fn classify(&self, question: &str) -> Result<QuestionTypeLabel>;
}

/// Deterministic wh-word and head-noun rules. First matching rule wins.
#[derive(Debug, Default, Clone, Copy)]
pub struct KeywordClassifier;

static RULES: LazyLock<Vec<(Regex, &'static str)>> = LazyLock::new(|| {
    let raw: &[(&str, &str)] = &[
        (r"\bwhat (does|do) .+ stand for\b", "ABBR:exp"),
        (r"\b(which|what) (city|town|capital)\b", "LOC:city"),
        (r"\b(which|what) (country|nation)\b", "LOC:country"),
        (r"\b(which|what) (us |u\.s\. )?state\b", "LOC:state"),
        (r"\b(which|what) (mountain|peak|volcano)\b", "LOC:mount"),
        (
            r"\b(which|what) (river|lake|sea|ocean|island|continent|county|region)\b",
            "LOC:other",
        ),
        (
            r"^where\b|\bwhere (is|was|are|were|did|does|do)\b",
            "LOC:other",
        ),
        (
            r"\b(which|what) (band|group|team|club|company|organi[sz]ation|tribe|dynasty)\b",
            "HUM:gr",
        ),
        (r"\b(which|what) (title|rank)\b", "HUM:title"),
        (
            r"^(who|whom|whose)\b|\b(who|whom|whose) (is|was|were|are|did|wrote|painted|played|won|invented|discovered)\b|\b(which|what) (person|man|woman|actor|actress|singer|writer|author|king|queen|president|prime minister|artist|composer|painter|poet|player|scientist|explorer|emperor|footballer|character)\b",
            "HUM:ind",
        ),
        (r"^how many\b|\bhow many\b", "NUM:count"),
        (
            r"^how much .*\b(cost|pay|paid|worth|price|earn)\b",
            "NUM:money",
        ),
        (r"^how much\b", "NUM:other"),
        (r"^how far\b|\b(what|which) distance\b", "NUM:dist"),
        (r"^how (long|old)\b", "NUM:period"),
        (r"^how (fast|quickly)\b|\b(what|which) speed\b", "NUM:speed"),
        (r"^how (tall|high|big|large|wide|deep)\b", "NUM:size"),
        (r"^how (heavy)\b|\b(what|which) weight\b", "NUM:weight"),
        (r"\b(what|which) temperature\b", "NUM:temp"),
        (
            r"\b(what|which) (percentage|percent|proportion)\b",
            "NUM:perc",
        ),
        (
            r"^when\b|\bwhen (did|was|were|is|does)\b|\b(what|which|in what|in which) (year|decade|century|date|month|day)\b",
            "NUM:date",
        ),
        (r"^why\b", "DESC:reason"),
        (
            r"^how (do|does|did|can|could|is|are|was|were|should)\b",
            "DESC:manner",
        ),
        (
            r"^what (is|are) (a|an|the meaning of|the definition of)\b|\bwhat does .+ mean\b",
            "DESC:def",
        ),
        (
            r"\b(what|which) (animal|bird|fish|dog|breed|insect|creature|mammal|reptile|species)\b",
            "ENTY:animal",
        ),
        (
            r"\b(what|which) (part of the body|organ|bone|muscle)\b",
            "ENTY:body",
        ),
        (r"\b(what|which) colou?r\b", "ENTY:color"),
        (r"\b(what|which) (language|dialect)\b", "ENTY:lang"),
        (r"\b(what|which) (letter)\b", "ENTY:letter"),
        (r"\b(what|which) (sport|game)\b", "ENTY:sport"),
        (r"\b(what|which) (musical )?instrument\b", "ENTY:instru"),
        (
            r"\b(what|which) (food|dish|drink|fruit|vegetable|cheese|wine|beer|cocktail)\b",
            "ENTY:food",
        ),
        (r"\b(what|which) (plant|flower|tree|herb)\b", "ENTY:plant"),
        (
            r"\b(what|which) (disease|illness|condition|drug|medicine)\b",
            "ENTY:dismed",
        ),
        (r"\b(what|which) currency\b", "ENTY:currency"),
        (
            r"\b(what|which) (film|movie|book|novel|song|album|play|opera|painting|poem|tv|television|show|series|musical|ballet|symphony|newspaper|magazine)\b",
            "ENTY:cremat",
        ),
        (
            r"\b(what|which) (religion|faith|god|goddess)\b",
            "ENTY:religion",
        ),
        (
            r"\b(what|which) (element|substance|gas|metal|mineral|chemical|compound)\b",
            "ENTY:substance",
        ),
        (
            r"\b(what|which) (car|ship|vehicle|aircraft|plane|boat|locomotive)\b",
            "ENTY:veh",
        ),
        (
            r"\b(what|which) (event|war|battle|festival)\b",
            "ENTY:event",
        ),
        (r"\b(what|which) (symbol|sign|flag)\b", "ENTY:symbol"),
        (r"\b(what|which) (word|name)\b", "ENTY:word"),
        (r"\b(what|which) (term)\b", "ENTY:termeq"),
        (r"\b(what|which) (product|brand)\b", "ENTY:product"),
        (
            r"\b(what|which) (method|technique|process)\b",
            "ENTY:techmeth",
        ),
    ];
    raw.iter()
        .map(|(p, l)| (Regex::new(p).expect("valid rule"), *l))
        .collect()
});

impl KeywordClassifier {
    pub fn fine_label(question: &str) -> &'static str {
        let q = question.trim().to_lowercase();
        RULES
            .iter()
            .find(|(re, _)| re.is_match(&q))
            .map(|(_, l)| *l)
            .unwrap_or("ENTY:other")
    }
}

impl QuestionClassifier for KeywordClassifier {
    fn classify(&self, question: &str) -> Result<QuestionTypeLabel> {
        Ok(
            QuestionTypeLabel::from_fine(Self::fine_label(question), None)
                .expect("rule labels are valid"),
        )
    }
}

pub const CLASSIFY_PROMPT: &str =
    "Classify the question below into exactly one TREC question-type label. \
Valid labels: {labels}.\nReply with the label only.\nQuestion: {question}";

/// Prompts a chat model for a TREC fine label.
pub struct LlmClassifier<'a> {
    pub client: &'a ServiceClient,
    pub template: String,
    pub params: SamplingParams,
}

impl<'a> LlmClassifier<'a> {
    pub fn new(client: &'a ServiceClient) -> Self {
        LlmClassifier {
            client,
            template: CLASSIFY_PROMPT.to_owned(),
            params: SamplingParams::default(),
        }
    }

    /// First known label appearing in the reply, case-insensitively.
    pub fn parse_reply(reply: &str) -> Option<&'static str> {
        static LABEL: LazyLock<Regex> = LazyLock::new(|| {
            Regex::new(r"(?i)\b(ABBR|DESC|ENTY|HUM|LOC|NUM)\s*:\s*([a-z]+)\b").unwrap()
        });
        LABEL.captures_iter(reply).find_map(|c| {
            let candidate = format!("{}:{}", c[1].to_uppercase(), c[2].to_lowercase());
            FINE_LABELS.iter().copied().find(|l| *l == candidate)
        })
    }
}

impl QuestionClassifier for LlmClassifier<'_> {
    fn classify(&self, question: &str) -> Result<QuestionTypeLabel> {
        let prompt = self
            .template
            .replace("{labels}", &FINE_LABELS.join(", "))
            .replace("{question}", question);
        let reply = self.client.chat(&prompt, &self.params)?.response;
        let fine = Self::parse_reply(&reply).ok_or_else(|| Error::Classification {
            question: question.to_owned(),
            reason: format!("no TREC label in reply {reply:?}"),
        })?;
        Ok(QuestionTypeLabel::from_fine(fine, None).expect("parsed labels are valid"))
    }
}
