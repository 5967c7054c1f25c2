//! Chat-completion providers: live HTTP endpoints, deterministic mocks and
//! record/replay cassettes behind one [`ChatProvider`] trait.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Message, TokenUsage};

mod cassette;
mod config;
mod http;
mod mock;
mod retry;
mod throttle;

pub use cassette::{request_hash, CassetteRecord, RecordingProvider, ReplayProvider};
pub use config::{build_provider, ProviderEntry, ProviderKind, ProvidersConfig};
pub use http::{FieldAdapter, HttpEndpoint, HttpProvider};
pub use mock::{MockProvider, MockRule, MockScript};
pub use retry::{NoSleep, RetryPolicy, RetryingProvider, Sleeper, ThreadSleeper};
pub use throttle::{ThrottleConfig, ThrottledProvider};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_tokens: u32,
    /// `None` keeps the provider default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thinking_budget: Option<u32>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_tokens: 2048,
            temperature: None,
            thinking_budget: None,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.max_tokens == 0 {
            return Err(ProviderError::Rejected("max_tokens must be positive".into()));
        }
        if let Some(t) = self.temperature {
            // also rejects NaN
            if t.is_nan() || t < 0.0 {
                return Err(ProviderError::Rejected(format!("invalid temperature {t}")));
            }
        }
        match self.thinking_budget {
            Some(0) => Err(ProviderError::Rejected("thinking_budget must be positive".into())),
            Some(b) if b > self.max_tokens => Err(ProviderError::Rejected(format!(
                "thinking_budget {b} exceeds max_tokens {}",
                self.max_tokens
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub usage: TokenUsage,
    /// Wall-clock time from request start to full response.
    #[serde(rename = "latency_s", with = "crate::secs")]
    pub latency: Duration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thinking_text: Option<String>,
    /// True when usage was synthesized with [`token_estimate`] rather than reported.
    #[serde(default)]
    pub usage_estimated: bool,
    #[serde(default)]
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited{}", .retry_after.map(|d| format!(" (retry after {:.1}s)", d.as_secs_f64())).unwrap_or_default())]
    RateLimited { retry_after: Option<Duration> },
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("no cassette entry for request {0}")]
    CassetteMiss(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport(_) | ProviderError::RateLimited { .. })
    }
}

/// A chat-completion backend. Implementations must tolerate concurrent calls.
pub trait ChatProvider: Send + Sync {
    fn complete(
        &self,
        transcript: &[Message],
        params: &GenerationParams,
    ) -> Result<ModelResponse, ProviderError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for Box<P> {
    fn complete(
        &self,
        transcript: &[Message],
        params: &GenerationParams,
    ) -> Result<ModelResponse, ProviderError> {
        (**self).complete(transcript, params)
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for std::sync::Arc<P> {
    fn complete(
        &self,
        transcript: &[Message],
        params: &GenerationParams,
    ) -> Result<ModelResponse, ProviderError> {
        (**self).complete(transcript, params)
    }
}

/// Rough token count used when a provider reports no usage: `ceil(chars / 4)`.
pub fn token_estimate(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Estimated prompt tokens of a transcript, summed per message so that a
/// transcript prefix never costs more than the whole.
pub fn transcript_estimate(transcript: &[Message]) -> u64 {
    transcript.iter().map(|m| token_estimate(&m.content)).sum()
}

/// Prompt-cache accounting implied by checkpoint flags: the last checkpoint was
/// written by this request, earlier ones were written by previous requests.
pub fn estimate_cache_usage(transcript: &[Message]) -> (u64, u64, u64) {
    let mut offsets = Vec::new();
    let mut running = 0;
    for m in transcript {
        running += token_estimate(&m.content);
        if m.cache_checkpoint {
            offsets.push(running);
        }
    }
    let read = if offsets.len() >= 2 { offsets[offsets.len() - 2] } else { 0 };
    let written_to = offsets.last().copied().unwrap_or(0);
    (running - written_to, read, written_to - read)
}
