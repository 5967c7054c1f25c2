//! Money and latency accounting, including the prompt-caching savings model.

use std::collections::BTreeMap;
use std::time::Duration;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::engine::SampleTrace;
use crate::model::TokenUsage;

pub const DEFAULT_CACHE_READ_RATIO: Decimal = Decimal::from_parts(10, 0, 0, false, 2);
pub const DEFAULT_CACHE_WRITE_RATIO: Decimal = Decimal::from_parts(125, 0, 0, false, 2);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EconomicsError {
    #[error("no price for model `{0}`")]
    MissingPrice(String),
    #[error("invalid price for `{model}`: {message}")]
    InvalidPrice { model: String, message: String },
    #[error("no traces to aggregate")]
    EmptyInput,
}

/// Accepts `"0.003"`, `0.003` or `3`. Floats go through their shortest decimal
/// form so `0.1` stays exactly 0.1.
fn decimal_from_any<'de, D: Deserializer<'de>>(d: D) -> Result<Decimal, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Str(String),
        Int(i64),
        Float(f64),
    }
    let parse = |s: &str| s.trim().parse::<Decimal>().or_else(|_| Decimal::from_scientific(s.trim()));
    match Raw::deserialize(d)? {
        Raw::Str(s) => parse(&s).map_err(serde::de::Error::custom),
        Raw::Int(i) => Ok(Decimal::from(i)),
        Raw::Float(f) => parse(&f.to_string()).map_err(serde::de::Error::custom),
    }
}

fn opt_decimal_from_any<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Decimal>, D::Error> {
    decimal_from_any(d).map(Some)
}

/// USD per 1000 tokens. Cache rates default to fixed ratios of the input rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPrice {
    #[serde(deserialize_with = "decimal_from_any")]
    pub input_per_1k: Decimal,
    #[serde(deserialize_with = "decimal_from_any")]
    pub output_per_1k: Decimal,
    #[serde(default, deserialize_with = "opt_decimal_from_any", skip_serializing_if = "Option::is_none")]
    pub cache_read_per_1k: Option<Decimal>,
    #[serde(default, deserialize_with = "opt_decimal_from_any", skip_serializing_if = "Option::is_none")]
    pub cache_write_per_1k: Option<Decimal>,
}

impl ModelPrice {
    pub fn new(input_per_1k: Decimal, output_per_1k: Decimal) -> Self {
        Self {
            input_per_1k,
            output_per_1k,
            cache_read_per_1k: None,
            cache_write_per_1k: None,
        }
    }

    pub fn cache_read(&self) -> Decimal {
        self.cache_read_per_1k
            .unwrap_or(self.input_per_1k * DEFAULT_CACHE_READ_RATIO)
    }

    pub fn cache_write(&self) -> Decimal {
        self.cache_write_per_1k
            .unwrap_or(self.input_per_1k * DEFAULT_CACHE_WRITE_RATIO)
    }

    fn check(&self, model: &str) -> Result<(), EconomicsError> {
        let rates = [self.input_per_1k, self.output_per_1k, self.cache_read(), self.cache_write()];
        if rates.iter().any(|r| r.is_sign_negative() && !r.is_zero()) {
            return Err(EconomicsError::InvalidPrice {
                model: model.to_string(),
                message: "prices must be non-negative".into(),
            });
        }
        if self.cache_read() > self.input_per_1k {
            log::warn!("{model}: cache read price exceeds the input price");
        }
        Ok(())
    }
}

/// Pricing file: `{"as_of": "...", "models": {id: price}}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingTable {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub as_of: Option<String>,
    pub models: BTreeMap<String, ModelPrice>,
}

impl PricingTable {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let table: Self = serde_path_to_error::deserialize(de).map_err(|e| e.to_string())?;
        table.validate().map_err(|e| e.to_string())?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), EconomicsError> {
        self.models.iter().try_for_each(|(m, p)| p.check(m))
    }

    pub fn get(&self, model: &str) -> Result<&ModelPrice, EconomicsError> {
        self.models
            .get(model)
            .ok_or_else(|| EconomicsError::MissingPrice(model.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub input_cost: Decimal,
    pub output_cost: Decimal,
    pub cache_read_cost: Decimal,
    pub cache_write_cost: Decimal,
    pub total: Decimal,
}

impl std::ops::Add for CostBreakdown {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            input_cost: self.input_cost + o.input_cost,
            output_cost: self.output_cost + o.output_cost,
            cache_read_cost: self.cache_read_cost + o.cache_read_cost,
            cache_write_cost: self.cache_write_cost + o.cache_write_cost,
            total: self.total + o.total,
        }
    }
}

fn per_1k(tokens: u64, rate: Decimal) -> Decimal {
    Decimal::from(tokens) * rate / Decimal::ONE_THOUSAND
}

pub fn run_cost(usage: &TokenUsage, price: &ModelPrice) -> CostBreakdown {
    let input_cost = per_1k(usage.input_tokens, price.input_per_1k);
    let output_cost = per_1k(usage.output_tokens, price.output_per_1k);
    let cache_read_cost = per_1k(usage.cache_read_tokens, price.cache_read());
    let cache_write_cost = per_1k(usage.cache_write_tokens, price.cache_write());
    CostBreakdown {
        input_cost,
        output_cost,
        cache_read_cost,
        cache_write_cost,
        total: input_cost + output_cost + cache_read_cost + cache_write_cost,
    }
}

/// Cost of a trace as recorded: the strategy model's usage at its price plus the
/// judge's usage at the judge price.
pub fn trace_cost(
    trace: &SampleTrace,
    pricing: &PricingTable,
    price_id: impl Fn(&str) -> String,
) -> Result<CostBreakdown, EconomicsError> {
    let model = pricing.get(&price_id(&trace.strategy.model_id))?;
    let mut cost = run_cost(&trace.model_usage(), model);
    if !trace.judge_usage.is_zero() {
        let judge_id = trace.strategy.judge_model_id.as_deref().unwrap_or(&trace.strategy.model_id);
        cost = cost + run_cost(&trace.judge_usage, pricing.get(&price_id(judge_id))?);
    }
    Ok(cost)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CachingComparison {
    pub uncached: CostBreakdown,
    pub cached: CostBreakdown,
    pub savings_fraction: f64,
}

/// Per-round prompt and output token counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundTokens {
    pub prompt: u64,
    pub output: u64,
}

/// Compares billing each round's full prompt at the input rate against billing
/// with a cache checkpoint after the initial prompt and after every answer.
/// Round 0 writes its prompt; round r reads the prefix cached by round r-1 and
/// writes the extension up to the end of the previous answer.
pub fn caching_model(rounds: &[RoundTokens], price: &ModelPrice) -> CachingComparison {
    let mut uncached = CostBreakdown::default();
    let mut cached = CostBreakdown::default();
    let mut prev_checkpoint = 0u64;
    for (r, round) in rounds.iter().enumerate() {
        uncached = uncached + run_cost(&TokenUsage::new(round.prompt, round.output), price);
        let checkpoint = if r == 0 {
            round.prompt
        } else {
            (rounds[r - 1].prompt + rounds[r - 1].output).min(round.prompt)
        };
        let read = prev_checkpoint.min(checkpoint);
        let usage = TokenUsage {
            input_tokens: round.prompt - checkpoint,
            output_tokens: round.output,
            cache_read_tokens: read,
            cache_write_tokens: checkpoint - read,
        };
        cached = cached + run_cost(&usage, price);
        prev_checkpoint = checkpoint;
    }
    let savings_fraction = if uncached.total.is_zero() {
        0.0
    } else {
        1.0 - (cached.total / uncached.total).to_f64().unwrap_or(1.0)
    };
    CachingComparison {
        uncached,
        cached,
        savings_fraction,
    }
}

/// Applies [`caching_model`] to a trace. Judge calls are billed uncached in both
/// scenarios.
pub fn caching_cost_model(
    trace: &SampleTrace,
    price: &ModelPrice,
    judge_price: Option<&ModelPrice>,
) -> Result<CachingComparison, EconomicsError> {
    let rounds: Vec<RoundTokens> = trace
        .snapshots
        .iter()
        .map(|s| RoundTokens {
            prompt: s.response.usage.prompt_tokens(),
            output: s.response.usage.output_tokens,
        })
        .collect();
    let mut cmp = caching_model(&rounds, price);
    if !trace.judge_usage.is_zero() {
        let jp = judge_price.ok_or_else(|| {
            EconomicsError::MissingPrice(trace.strategy.judge_model_id.clone().unwrap_or_default())
        })?;
        let judge = run_cost(&trace.judge_usage, jp);
        cmp.uncached = cmp.uncached + judge;
        cmp.cached = cmp.cached + judge;
        cmp.savings_fraction = if cmp.uncached.total.is_zero() {
            0.0
        } else {
            1.0 - (cmp.cached.total / cmp.uncached.total).to_f64().unwrap_or(1.0)
        };
    }
    Ok(cmp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencySummary {
    #[serde(with = "crate::secs")]
    pub mean: Duration,
    #[serde(with = "crate::secs")]
    pub p50: Duration,
    #[serde(with = "crate::secs")]
    pub p95: Duration,
}

/// Nearest-rank quantile: the value at position ceil(p * n) in sorted order.
pub fn nearest_rank(sorted: &[Duration], p: f64) -> Duration {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

pub fn summarize_latencies(latencies: &[Duration]) -> Result<LatencySummary, EconomicsError> {
    if latencies.is_empty() {
        return Err(EconomicsError::EmptyInput);
    }
    let mut sorted = latencies.to_vec();
    sorted.sort();
    let total: f64 = latencies.iter().map(Duration::as_secs_f64).sum();
    Ok(LatencySummary {
        mean: Duration::from_secs_f64(total / latencies.len() as f64),
        p50: nearest_rank(&sorted, 0.5),
        p95: nearest_rank(&sorted, 0.95),
    })
}

pub fn aggregate_latency(traces: &[SampleTrace]) -> Result<LatencySummary, EconomicsError> {
    let l: Vec<Duration> = traces.iter().map(|t| t.total_latency).collect();
    summarize_latencies(&l)
}
