//! Structured generation support for triplet and quadruplet extraction:
//! chat prompts, few-shot sampling, parsing of generated JSON, clamping,
//! submission mapping and the adapter-tuning configuration document.

mod adapter;
mod parse;
mod prompt;

use thiserror::Error;

pub use adapter::AdapterTuneConfig;
pub use parse::{
    clamp_tuples, parse_generation, serialize_tuples, to_submission_tuples, GeneratedTuple,
    GenerationLine, GenerationRecord, RepairEvent,
};
pub use prompt::{
    build_prompt, build_training_prompt, sample_demos, sample_indices, Decoding, Demonstration,
    ModelFamily, PromptProfile, PromptSpec, TemplateRegistry, DEFAULT_DEMOS,
};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("no instruction template for {language} / {domain}: {detail}")]
    MissingTemplate {
        language: String,
        domain: String,
        detail: String,
    },
    #[error("invalid prompt spec: {0}")]
    InvalidSpec(String),
    #[error("need {needed} demonstrations but the split has {available} records")]
    InsufficientRecords { needed: usize, available: usize },
    #[error("template registry: {0}")]
    Registry(String),
    #[error("invalid adapter config: {0}")]
    AdapterConfig(String),
}
