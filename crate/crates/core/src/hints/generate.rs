//! Answer elicitation, answer verification and hint generation.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::markers::{parse_list_items, parse_source_markers, split_references};
use crate::error::{Error, Result};
use crate::services::{Chat, SamplingParams};
use crate::text::{contains_run, normalize_tokens};

pub const DEFAULT_HINT_PROMPT: &str = "Give me {count} hints for the question \"{question}\" \
without revealing the answer. Write each hint on its own numbered line and cite your sources.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HintPrompts {
    /// Prompt for the first step; `{question}` is substituted.
    pub answer_template: String,
    /// `{question}` and `{count}` are substituted.
    pub hint_template: String,
    pub hint_count: usize,
}

impl Default for HintPrompts {
    fn default() -> Self {
        HintPrompts {
            answer_template: "{question}".into(),
            hint_template: DEFAULT_HINT_PROMPT.into(),
            hint_count: 10,
        }
    }
}

impl HintPrompts {
    pub fn answer_prompt(&self, question: &str) -> String {
        self.answer_template.replace("{question}", question)
    }

    pub fn hint_prompt(&self, question: &str) -> String {
        self.hint_template
            .replace("{question}", question)
            .replace("{count}", &self.hint_count.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationStatus {
    AnswerNotFound,
    AnswerMismatch,
    Ok,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutcome {
    pub status: GenerationStatus,
    pub snippet: Option<String>,
    pub snippet_sources: Vec<String>,
    pub hints_raw: Vec<(String, Vec<u32>)>,
    pub hints_sources: Vec<String>,
}

impl GenerationOutcome {
    fn without_hints(
        status: GenerationStatus,
        snippet: Option<String>,
        sources: Vec<String>,
    ) -> Self {
        GenerationOutcome {
            status,
            snippet,
            snippet_sources: sources,
            hints_raw: Vec::new(),
            hints_sources: Vec::new(),
        }
    }
}

/// Normalized token containment in either direction.
pub fn answers_match(generated: &str, ground_truth: &str) -> bool {
    let g = normalize_tokens(generated);
    let t = normalize_tokens(ground_truth);
    if g.is_empty() || t.is_empty() {
        return false;
    }
    contains_run(&g, &t) || contains_run(&t, &g)
}

static DECLINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(i (do not|don't|don’t) know|i'?m not sure|i am not sure|i (cannot|can't|can’t|could not|couldn't) (find|answer|determine|say|provide)|unable to (find|answer|determine)|no (reliable )?information)\b",
    )
    .unwrap()
});

/// True when the response is empty or reads as a refusal.
pub fn is_decline(response: &str) -> bool {
    response.trim().is_empty() || DECLINE.is_match(response)
}

/// Steps one and two: asks the question and checks the reply against the
/// ground truth. The outcome never carries hints.
pub fn elicit_answer(
    question: &str,
    answer: &str,
    chat: &dyn Chat,
    prompts: &HintPrompts,
    params: &SamplingParams,
) -> Result<GenerationOutcome> {
    let reply = chat.chat(&prompts.answer_prompt(question), params)?;
    let (body, snippet_sources) = split_references(&reply);
    let (snippet, _) = parse_source_markers(&body);
    let status = if answers_match(&snippet, answer) {
        GenerationStatus::Ok
    } else if is_decline(&snippet) {
        GenerationStatus::AnswerNotFound
    } else {
        GenerationStatus::AnswerMismatch
    };
    let snippet = (!snippet.is_empty()).then_some(snippet);
    Ok(GenerationOutcome::without_hints(
        status,
        snippet,
        snippet_sources,
    ))
}

/// Hint texts with their source marker numbers.
pub type MarkedHints = Vec<(String, Vec<u32>)>;

/// Step three: the hint list with marker numbers, and the reference URLs.
pub fn request_hints(
    question: &str,
    chat: &dyn Chat,
    prompts: &HintPrompts,
    params: &SamplingParams,
) -> Result<(MarkedHints, Vec<String>)> {
    let reply = chat.chat(&prompts.hint_prompt(question), params)?;
    let (body, hints_sources) = split_references(&reply);
    let hints_raw: Vec<(String, Vec<u32>)> = parse_list_items(&body)
        .iter()
        .map(|item| parse_source_markers(item))
        .filter(|(text, _)| !text.is_empty())
        .collect();
    if hints_raw.is_empty() {
        return Err(Error::Generation(format!(
            "no hint list in reply to {question:?}"
        )));
    }
    Ok((hints_raw, hints_sources))
}

/// All three steps: hints are only requested for a verified answer.
pub fn elicit_and_verify(
    question: &str,
    answer: &str,
    chat: &dyn Chat,
    prompts: &HintPrompts,
    params: &SamplingParams,
) -> Result<GenerationOutcome> {
    let mut outcome = elicit_answer(question, answer, chat, prompts, params)?;
    if outcome.status == GenerationStatus::Ok {
        let (hints_raw, hints_sources) = request_hints(question, chat, prompts, params)?;
        outcome.hints_raw = hints_raw;
        outcome.hints_sources = hints_sources;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::services::ServiceError;
    use std::collections::HashMap;

    struct Scripted(HashMap<String, String>);

    impl Chat for Scripted {
        fn chat(&self, prompt: &str, _: &SamplingParams) -> Result<String, ServiceError> {
            self.0
                .get(prompt)
                .cloned()
                .ok_or_else(|| ServiceError::BadResponse(format!("unscripted {prompt}")))
        }
    }

    const Q: &str = "Where is the headquarters of the International Monetary Fund located?";

    fn scripted(answer_reply: &str, hint_reply: &str) -> Scripted {
        let p = HintPrompts::default();
        Scripted(HashMap::from([
            (p.answer_prompt(Q), answer_reply.to_owned()),
            (p.hint_prompt(Q), hint_reply.to_owned()),
        ]))
    }

    fn ten_hints() -> String {
        let mut s = String::from("Sure, here are some hints:\n");
        for i in 1..=10 {
            s.push_str(&format!(
                "{i}. Hint number {i} about the city. [{}]\n",
                1 + i % 2
            ));
        }
        s.push_str("\n[1]: https://en.wikipedia.org/wiki/IMF\n[2]: https://www.imf.org/en/About\n");
        s
    }

    #[test]
    fn matching_answer_yields_hints() {
        let chat = scripted(
            "The IMF is headquartered in Washington, D.C. [1]\n\n[1]: https://en.wikipedia.org/wiki/IMF",
            &ten_hints(),
        );
        let out = elicit_and_verify(
            Q,
            "Washington, D.C.",
            &chat,
            &HintPrompts::default(),
            &SamplingParams::default(),
        )
        .unwrap();
        assert_eq!(out.status, GenerationStatus::Ok);
        assert_eq!(
            out.snippet.as_deref(),
            Some("The IMF is headquartered in Washington, D.C.")
        );
        assert_eq!(
            out.snippet_sources,
            vec!["https://en.wikipedia.org/wiki/IMF"]
        );
        assert_eq!(out.hints_raw.len(), 10);
        assert_eq!(
            out.hints_raw[0],
            ("Hint number 1 about the city.".to_owned(), vec![2])
        );
        assert_eq!(out.hints_sources.len(), 2);
    }

    #[test]
    fn mismatch_and_decline() {
        let p = HintPrompts::default();
        let s = SamplingParams::default();
        let chat = scripted("New York", "unused");
        let out = elicit_and_verify(Q, "Washington, D.C.", &chat, &p, &s).unwrap();
        assert_eq!(out.status, GenerationStatus::AnswerMismatch);
        assert!(out.hints_raw.is_empty());

        let chat = scripted("I don't know", "unused");
        let out = elicit_and_verify(Q, "Washington, D.C.", &chat, &p, &s).unwrap();
        assert_eq!(out.status, GenerationStatus::AnswerNotFound);

        let chat = scripted("", "unused");
        assert_eq!(
            elicit_and_verify(Q, "Washington, D.C.", &chat, &p, &s)
                .unwrap()
                .status,
            GenerationStatus::AnswerNotFound
        );
    }

    #[test]
    fn unparseable_hint_list_is_an_error() {
        let chat = scripted("Washington, D.C.", "I would rather not.");
        let err = elicit_and_verify(
            Q,
            "Washington, D.C.",
            &chat,
            &HintPrompts::default(),
            &SamplingParams::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Generation(_)));
    }

    #[test]
    fn answer_matching() {
        assert!(answers_match(
            "The answer is Washington, D.C.",
            "Washington, D.C."
        ));
        assert!(answers_match("Paris", "paris."));
        assert!(!answers_match("London", "Paris"));
        assert!(answers_match("The Beatles", "Beatles"));
        assert!(!answers_match("Parisian", "Paris"));
        assert!(!answers_match("", "Paris"));
        for (a, b) in [
            ("x y z", "y"),
            ("Paris", "London"),
            ("the Nile", "Nile river"),
        ] {
            assert_eq!(answers_match(a, b), answers_match(b, a));
        }
    }
}
