use std::collections::BTreeMap;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::{relative_gain, FrontierPoint};
use crate::economics::{aggregate_latency, LatencySummary};
use crate::engine::SampleTrace;
use crate::model::{FeedbackKind, StrategyConfig};

/// Which latency figure a frontier uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyStat {
    #[default]
    Mean,
    P50,
    P95,
}

impl LatencyStat {
    pub fn pick(self, s: &LatencySummary) -> std::time::Duration {
        match self {
            LatencyStat::Mean => s.mean,
            LatencyStat::P50 => s.p50,
            LatencyStat::P95 => s.p95,
        }
    }
}

/// Final-round score; a trace without any scored round counts as 0.
pub fn trace_score(trace: &SampleTrace) -> f64 {
    trace
        .final_snapshot()
        .and_then(|s| s.verdict.as_ref())
        .map(|v| v.score)
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigSummary {
    pub label: String,
    pub strategy: StrategyConfig,
    pub family: String,
    pub n: usize,
    pub accuracy: f64,
    pub latency: LatencySummary,
    /// Mean cost per sample; `None` when any trace lacks a price.
    pub mean_cost: Option<Decimal>,
    pub truncated: usize,
    pub estimated_usage: bool,
}

impl ConfigSummary {
    pub fn frontier_point(&self, stat: LatencyStat) -> FrontierPoint {
        FrontierPoint {
            model_id: self.strategy.model_id.clone(),
            label: self.label.clone(),
            accuracy: self.accuracy,
            latency: stat.pick(&self.latency),
            cost: self.mean_cost,
            family: self.family.clone(),
        }
    }
}

pub fn group_by_label(traces: &[SampleTrace]) -> BTreeMap<String, Vec<&SampleTrace>> {
    let mut groups: BTreeMap<String, Vec<&SampleTrace>> = BTreeMap::new();
    for t in traces {
        groups.entry(t.strategy_label.clone()).or_default().push(t);
    }
    groups
}

/// One summary per strategy label, in label order.
pub fn summarize(traces: &[SampleTrace]) -> Vec<ConfigSummary> {
    group_by_label(traces)
        .into_iter()
        .map(|(label, group)| {
            let n = group.len();
            let owned: Vec<SampleTrace> = group.iter().map(|t| (*t).clone()).collect();
            let costs: Option<Vec<Decimal>> = group.iter().map(|t| t.cost_usd).collect();
            ConfigSummary {
                label,
                strategy: group[0].strategy.clone(),
                family: group[0].strategy.family(),
                n,
                accuracy: group.iter().map(|t| trace_score(t)).sum::<f64>() / n as f64,
                latency: aggregate_latency(&owned).expect("groups are non-empty"),
                mean_cost: costs.map(|c| c.iter().sum::<Decimal>() / Decimal::from(n)),
                truncated: group.iter().filter(|t| t.truncation.is_some()).count(),
                estimated_usage: group.iter().any(|t| t.estimated_usage),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainRow {
    pub label: String,
    pub baseline_label: String,
    pub accuracy: f64,
    pub baseline_accuracy: f64,
    /// `None` when the baseline accuracy is zero.
    pub gain_pct: Option<f64>,
}

fn is_baseline(s: &StrategyConfig) -> bool {
    s.reflection_rounds == 0 && s.thinking_budget.is_none() && s.feedback == FeedbackKind::None
}

/// Gain of each non-baseline strategy over the plain single-call run of the
/// same model (matching the caching flag when both variants exist).
pub fn gains_table(summaries: &[ConfigSummary]) -> Vec<GainRow> {
    let mut rows = Vec::new();
    for s in summaries.iter().filter(|s| !is_baseline(&s.strategy)) {
        let mut bases: Vec<&ConfigSummary> = summaries
            .iter()
            .filter(|b| is_baseline(&b.strategy) && b.strategy.model_id == s.strategy.model_id)
            .collect();
        bases.sort_by_key(|b| b.strategy.caching_enabled != s.strategy.caching_enabled);
        if let Some(base) = bases.first() {
            rows.push(GainRow {
                label: s.label.clone(),
                baseline_label: base.label.clone(),
                accuracy: s.accuracy,
                baseline_accuracy: base.accuracy,
                gain_pct: relative_gain(s.accuracy, base.accuracy).ok(),
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReflectionCurve {
    pub label: String,
    /// (round, accuracy over traces that reached the round, count)
    pub points: Vec<(usize, f64, usize)>,
}

pub fn reflection_curves(traces: &[SampleTrace]) -> Vec<ReflectionCurve> {
    group_by_label(traces)
        .into_iter()
        .map(|(label, group)| {
            let max_rounds = group.iter().map(|t| t.snapshots.len()).max().unwrap_or(0);
            let points = (0..max_rounds)
                .filter_map(|r| {
                    let scores: Vec<f64> = group
                        .iter()
                        .filter_map(|t| t.snapshots.get(r)?.verdict.as_ref().map(|v| v.score))
                        .collect();
                    (!scores.is_empty())
                        .then(|| (r, scores.iter().sum::<f64>() / scores.len() as f64, scores.len()))
                })
                .collect();
            ReflectionCurve { label, points }
        })
        .collect()
}

/// Pass flags per complete, fully scored trace of one label.
pub fn pass_matrix(traces: &[&SampleTrace]) -> Vec<Vec<bool>> {
    traces
        .iter()
        .filter(|t| t.is_complete())
        .filter_map(|t| t.pass_flags())
        .collect()
}
