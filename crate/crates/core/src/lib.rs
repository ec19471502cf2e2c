//! Building blocks for hint datasets over factoid questions: question
//! admission and sampling, LLM-driven hint generation with leakage and
//! rephrase filtering, and the two automatic hint-quality scores
//! (convergence and familiarity) together with the statistics used to
//! validate them against human ratings.

pub mod analytics;
pub mod annotation;
pub mod convergence;
pub mod error;
pub mod familiarity;
pub mod hints;
pub mod jsonl;
pub mod pipeline;
pub mod questions;
pub mod record;
pub mod services;
pub mod text;

pub use error::{Error, Result};
pub use record::{EntityMention, Hint, MajorType, QuestionRecord, RawQuestion};
