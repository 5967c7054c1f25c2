use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ChatProvider, GenerationParams, ModelResponse, ProviderError};
use crate::model::Message;

/// Exponential backoff with full jitter: the n-th retry waits a uniform draw from
/// `[0, min(max_delay, base_delay * 2^n)]`, or the server's retry-after hint when
/// that is longer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    #[serde(default = "RetryPolicy::default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "RetryPolicy::default_base_delay", with = "crate::secs")]
    pub base_delay: Duration,
    #[serde(default = "RetryPolicy::default_max_delay", with = "crate::secs")]
    pub max_delay: Duration,
}

impl RetryPolicy {
    fn default_max_retries() -> u32 {
        5
    }

    fn default_base_delay() -> Duration {
        Duration::from_millis(500)
    }

    fn default_max_delay() -> Duration {
        Duration::from_secs(30)
    }

    pub fn backoff_ceiling(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.min(30));
        self.base_delay
            .checked_mul(factor)
            .unwrap_or(self.max_delay)
            .min(self.max_delay)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: Self::default_max_retries(),
            base_delay: Self::default_base_delay(),
            max_delay: Self::default_max_delay(),
        }
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, duration: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Records requested delays without waiting.
#[derive(Debug, Default)]
pub struct NoSleep {
    pub slept: Mutex<Vec<Duration>>,
}

impl Sleeper for NoSleep {
    fn sleep(&self, duration: Duration) {
        self.slept.lock().expect("poisoned").push(duration);
    }
}

pub struct RetryingProvider<P, S = ThreadSleeper> {
    inner: P,
    policy: RetryPolicy,
    sleeper: S,
    rng: Mutex<ChaCha8Rng>,
}

impl<P: ChatProvider> RetryingProvider<P, ThreadSleeper> {
    pub fn new(inner: P, policy: RetryPolicy, seed: u64) -> Self {
        Self::with_sleeper(inner, policy, seed, ThreadSleeper)
    }
}

impl<P: ChatProvider, S: Sleeper> RetryingProvider<P, S> {
    pub fn with_sleeper(inner: P, policy: RetryPolicy, seed: u64, sleeper: S) -> Self {
        Self {
            inner,
            policy,
            sleeper,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn sleeper(&self) -> &S {
        &self.sleeper
    }

    fn delay_for(&self, attempt: u32, err: &ProviderError) -> Duration {
        let ceiling = self.policy.backoff_ceiling(attempt);
        let jittered = if ceiling.is_zero() {
            Duration::ZERO
        } else {
            let mut rng = self.rng.lock().expect("rng poisoned");
            Duration::from_secs_f64(rng.gen_range(0.0..=ceiling.as_secs_f64()))
        };
        match err {
            ProviderError::RateLimited {
                retry_after: Some(hint),
            } => jittered.max(*hint),
            _ => jittered,
        }
    }
}

impl<P: ChatProvider, S: Sleeper> ChatProvider for RetryingProvider<P, S> {
    fn complete(
        &self,
        transcript: &[Message],
        params: &GenerationParams,
    ) -> Result<ModelResponse, ProviderError> {
        let mut attempt = 0;
        loop {
            match self.inner.complete(transcript, params) {
                Ok(mut response) => {
                    response.retries += attempt;
                    return Ok(response);
                }
                Err(err) if err.is_retryable() && attempt < self.policy.max_retries => {
                    let delay = self.delay_for(attempt, &err);
                    log::debug!("retry {} after {:?}: {err}", attempt + 1, delay);
                    self.sleeper.sleep(delay);
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }
}
