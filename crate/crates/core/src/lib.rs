//! Prompting pipelines (vanilla, role-playing, chain-of-thought and their
//! combination) for LLM sentiment classification, plus the harness that
//! loads review datasets, runs a strategy over a chat backend and scores
//! the answers.

pub mod backend;
pub mod cli;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod parser;
pub mod strategy;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    canonical_label_string, label_space_contains, DomainTag, LabelSpace, Outcome, Polarity,
    Prediction, Sample,
};
