use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ChatProvider, GenerationParams, ModelResponse, ProviderError};
use crate::model::Message;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThrottleConfig {
    #[serde(default = "ThrottleConfig::default_in_flight")]
    pub max_in_flight: usize,
    /// Token-bucket refill rate; `None` disables rate limiting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_second: Option<f64>,
    #[serde(default = "ThrottleConfig::default_burst")]
    pub burst: f64,
}

impl ThrottleConfig {
    fn default_in_flight() -> usize {
        4
    }

    fn default_burst() -> f64 {
        1.0
    }
}

impl Default for ThrottleConfig {
    fn default() -> Self {
        Self {
            max_in_flight: Self::default_in_flight(),
            requests_per_second: None,
            burst: Self::default_burst(),
        }
    }
}

struct Bucket {
    tokens: f64,
    last: Instant,
}

/// Caps concurrent calls per provider and optionally paces them with a token bucket.
pub struct ThrottledProvider<P> {
    inner: P,
    config: ThrottleConfig,
    in_flight: Mutex<usize>,
    released: Condvar,
    bucket: Mutex<Bucket>,
}

impl<P: ChatProvider> ThrottledProvider<P> {
    pub fn new(inner: P, config: ThrottleConfig) -> Self {
        let burst = config.burst.max(1.0);
        Self {
            inner,
            config,
            in_flight: Mutex::new(0),
            released: Condvar::new(),
            bucket: Mutex::new(Bucket {
                tokens: burst,
                last: Instant::now(),
            }),
        }
    }

    fn acquire_slot(&self) {
        let limit = self.config.max_in_flight.max(1);
        let mut n = self.in_flight.lock().expect("throttle poisoned");
        while *n >= limit {
            n = self.released.wait(n).expect("throttle poisoned");
        }
        *n += 1;
    }

    fn release_slot(&self) {
        let mut n = self.in_flight.lock().expect("throttle poisoned");
        *n -= 1;
        self.released.notify_one();
    }

    fn take_token(&self) {
        let Some(rate) = self.config.requests_per_second.filter(|r| *r > 0.0) else {
            return;
        };
        let burst = self.config.burst.max(1.0);
        loop {
            let wait = {
                let mut bucket = self.bucket.lock().expect("bucket poisoned");
                let now = Instant::now();
                let elapsed = now.duration_since(bucket.last).as_secs_f64();
                bucket.tokens = (bucket.tokens + elapsed * rate).min(burst);
                bucket.last = now;
                if bucket.tokens >= 1.0 {
                    bucket.tokens -= 1.0;
                    return;
                }
                (1.0 - bucket.tokens) / rate
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

impl<P: ChatProvider> ChatProvider for ThrottledProvider<P> {
    fn complete(
        &self,
        transcript: &[Message],
        params: &GenerationParams,
    ) -> Result<ModelResponse, ProviderError> {
        self.acquire_slot();
        self.take_token();
        let result = self.inner.complete(transcript, params);
        self.release_slot();
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Gauge {
        current: AtomicUsize,
        peak: AtomicUsize,
    }

    impl ChatProvider for Gauge {
        fn complete(
            &self,
            _: &[Message],
            _: &GenerationParams,
        ) -> Result<ModelResponse, ProviderError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok(ModelResponse {
                text: "x".into(),
                usage: Default::default(),
                latency: Duration::ZERO,
                thinking_text: None,
                usage_estimated: false,
                retries: 0,
            })
        }
    }

    #[test]
    fn in_flight_limit_holds() {
        let p = ThrottledProvider::new(
            Gauge {
                current: AtomicUsize::new(0),
                peak: AtomicUsize::new(0),
            },
            ThrottleConfig {
                max_in_flight: 2,
                ..ThrottleConfig::default()
            },
        );
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for _ in 0..3 {
                        p.complete(&[Message::user("q")], &GenerationParams::default())
                            .unwrap();
                    }
                });
            }
        });
        let peak = p.inner.peak.load(Ordering::SeqCst);
        assert!((1..=2).contains(&peak), "peak {peak}");
    }

    #[test]
    fn token_bucket_paces_requests() {
        let p = ThrottledProvider::new(
            Gauge {
                current: AtomicUsize::new(0),
                peak: AtomicUsize::new(0),
            },
            ThrottleConfig {
                max_in_flight: 4,
                requests_per_second: Some(100.0),
                burst: 1.0,
            },
        );
        let start = Instant::now();
        for _ in 0..6 {
            p.complete(&[Message::user("q")], &GenerationParams::default())
                .unwrap();
        }
        // five refills at 10ms each
        assert!(start.elapsed() >= Duration::from_millis(45));
    }
}
