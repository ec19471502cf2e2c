//! Hint generation and filtering.

pub mod filter;
pub mod generate;
pub mod leakage;
pub mod lemma;
pub mod markers;

pub use filter::{
    cosine, filter_hints, prune_questions, question_similarity, DropReason, Embedder, FilterOutcome,
};
pub use generate::{
    answers_match, elicit_and_verify, elicit_answer, request_hints, GenerationOutcome,
    GenerationStatus, HintPrompts,
};
pub use leakage::{leaks_answer, LeakageReport};
pub use lemma::lemmatize;
pub use markers::parse_source_markers;
