//! Toolkit for building cloze-style knowledge probes from text corpora,
//! scoring masked language models on them, and preparing smoothed
//! multi-corpus training streams.
//!
//! The model itself stays behind the [`scorer::Scorer`] protocol; everything
//! in this crate is model-free.

pub mod corpus;
pub mod error;
pub mod evaluator;
pub mod jsonl;
pub mod mlm;
pub mod probes;
pub mod report;
pub mod sampler;
pub mod scalar;
pub mod scorer;
pub mod transfer;

pub use error::{Error, Result};
pub use scalar::{Rational, Scalar};

/// Sampling plan in double precision.
pub type SamplingPlan = sampler::SamplingPlan<f64>;
/// Per-instance evaluation result in double precision.
pub type InstanceResult = evaluator::InstanceResult<f64>;
/// Per-instance result with exact rational metrics.
pub type ExactInstanceResult = evaluator::InstanceResult<Rational>;
pub type TaskReport = report::TaskReport<f64>;
pub type ModelRanking = report::ModelRanking<f64>;
