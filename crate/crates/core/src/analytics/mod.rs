//! Difficulty labels, dataset statistics and metric validation.

pub mod correlate;
pub mod difficulty;
pub mod stats;
pub mod sweep;

pub use correlate::{
    compare_aggregations, correlate, mse, pearson, CorrelationReport, HumanScores, Metric,
};
pub use difficulty::{
    answer_difficulty, question_difficulty, relevance_fraction, DifficultyLabel, DifficultyLevel,
    Retriever,
};
pub use stats::{dataset_stats, StatsReport};
pub use sweep::{best_n, curve_csv, hicos_sweep, CandidateMode, SweepPoint};
