//! Benchmark harness for inference-time LLM strategies.
//!
//! A run takes a dataset of samples and a grid of [`model::StrategyConfig`]s,
//! executes every sample through the [`engine`] (initial answer plus optional
//! self-reflection rounds with [`feedback`]), scores each round with the task's
//! [`verifier`], and prices the usage with [`economics`]. The [`analysis`]
//! module turns the resulting traces into frontiers, transition matrices and
//! significance tests.

pub mod model;
pub mod prompts;
pub mod provider;
pub mod analysis;
pub mod dataset;
pub mod verifier;
pub mod economics;
pub mod engine;
pub mod feedback;

pub use model::{
    FeedbackKind, Message, Role, Sample, StrategyConfig, TaskInput, TaskKind, TokenUsage,
};

/// Serializes a `Duration` as fractional seconds.
pub(crate) mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}
