//! Question admission, type detection and stratified sampling.

mod classify;
mod sample;

pub use classify::{
    coarse_of, KeywordClassifier, LlmClassifier, QuestionClassifier, QuestionTypeLabel, FINE_LABELS,
};
pub use sample::{allocate, stratified_sample};

use serde::{Deserialize, Serialize};

use crate::record::{MajorType, MAX_QUESTION_WORDS, MIN_QUESTION_WORDS};
use crate::services::{ServiceClient, ServiceError};
use crate::text::question_word_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    TooShort,
    TooLong,
    NoQuestionMark,
    AnswerNoWikiPage,
    DescriptionType,
}

/// Outcome of the admission filters. A reason is present iff rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionVerdict {
    reason: Option<RejectReason>,
}

impl AdmissionVerdict {
    pub const ACCEPTED: AdmissionVerdict = AdmissionVerdict { reason: None };

    pub fn reject(reason: RejectReason) -> Self {
        AdmissionVerdict {
            reason: Some(reason),
        }
    }

    pub fn accepted(&self) -> bool {
        self.reason.is_none()
    }

    pub fn reason(&self) -> Option<RejectReason> {
        self.reason
    }
}

/// Maps an answer string to a Wikipedia article title, if one exists.
pub trait WikiResolver: Sync {
    fn resolve(&self, title: &str) -> Result<Option<String>, ServiceError>;
}

impl WikiResolver for ServiceClient {
    fn resolve(&self, title: &str) -> Result<Option<String>, ServiceError> {
        self.resolve_title(title)
    }
}

/// Text-only checks: terminal question mark and 6..=20 words.
pub fn check_question_text(question: &str) -> AdmissionVerdict {
    if !question.trim_end().ends_with('?') {
        return AdmissionVerdict::reject(RejectReason::NoQuestionMark);
    }
    let n = question_word_count(question);
    if n < MIN_QUESTION_WORDS {
        AdmissionVerdict::reject(RejectReason::TooShort)
    } else if n > MAX_QUESTION_WORDS {
        AdmissionVerdict::reject(RejectReason::TooLong)
    } else {
        AdmissionVerdict::ACCEPTED
    }
}

/// Applies the text checks, then requires the answer to resolve to an
/// article. Resolver failures are errors, not rejections.
pub fn filter_question(
    question: &str,
    answer: &str,
    resolver: &dyn WikiResolver,
) -> Result<AdmissionVerdict, ServiceError> {
    let verdict = check_question_text(question);
    if !verdict.accepted() {
        return Ok(verdict);
    }
    if answer.trim().is_empty() {
        return Ok(AdmissionVerdict::reject(RejectReason::AnswerNoWikiPage));
    }
    Ok(match resolver.resolve(answer)? {
        Some(_) => AdmissionVerdict::ACCEPTED,
        None => AdmissionVerdict::reject(RejectReason::AnswerNoWikiPage),
    })
}

/// DESCRIPTION questions are not factoid and are excluded.
pub fn admit_type(label: &QuestionTypeLabel) -> AdmissionVerdict {
    if label.major == MajorType::Description {
        AdmissionVerdict::reject(RejectReason::DescriptionType)
    } else {
        AdmissionVerdict::ACCEPTED
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct StubResolver;

    impl WikiResolver for StubResolver {
        fn resolve(&self, title: &str) -> Result<Option<String>, ServiceError> {
            match title {
                "asdfgh-nonexistent" => Ok(None),
                "boom" => Err(ServiceError::transport("down")),
                t => Ok(Some(t.to_owned())),
            }
        }
    }

    #[test]
    fn short_question_rejected() {
        let v = filter_question("Who wrote Hamlet?", "William Shakespeare", &StubResolver).unwrap();
        assert_eq!(v.reason(), Some(RejectReason::TooShort));
    }

    #[test]
    fn boundaries_inclusive() {
        let twenty = format!("{}?", vec!["word"; 20].join(" "));
        assert!(filter_question(&twenty, "Paris", &StubResolver)
            .unwrap()
            .accepted());
        let six = "Which city hosts the IMF headquarters?";
        assert!(filter_question(six, "Paris", &StubResolver)
            .unwrap()
            .accepted());
        let twenty_one = format!("{}?", vec!["word"; 21].join(" "));
        assert_eq!(
            filter_question(&twenty_one, "Paris", &StubResolver)
                .unwrap()
                .reason(),
            Some(RejectReason::TooLong)
        );
        let five = "Which city hosts the IMF?";
        assert_eq!(
            check_question_text(five).reason(),
            Some(RejectReason::TooShort)
        );
    }

    #[test]
    fn missing_mark_and_missing_page() {
        assert_eq!(
            check_question_text("Name the city that hosts the IMF headquarters").reason(),
            Some(RejectReason::NoQuestionMark)
        );
        let q = "In which city are the headquarters of the IMF?";
        assert_eq!(
            filter_question(q, "asdfgh-nonexistent", &StubResolver)
                .unwrap()
                .reason(),
            Some(RejectReason::AnswerNoWikiPage)
        );
        assert!(filter_question(q, "boom", &StubResolver).is_err());
    }

    #[test]
    fn filtering_is_idempotent() {
        let qs = [
            ("Who wrote Hamlet?", "Shakespeare"),
            (
                "In which city are the headquarters of the IMF?",
                "Washington, D.C.",
            ),
            (
                "In which city are the headquarters of the IMF?",
                "asdfgh-nonexistent",
            ),
        ];
        let once: Vec<_> = qs
            .iter()
            .filter(|(q, a)| filter_question(q, a, &StubResolver).unwrap().accepted())
            .collect();
        let twice: Vec<_> = once
            .iter()
            .filter(|(q, a)| filter_question(q, a, &StubResolver).unwrap().accepted())
            .collect();
        assert_eq!(once.len(), 1);
        assert_eq!(once.len(), twice.len());
    }
}
