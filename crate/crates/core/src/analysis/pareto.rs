use std::cmp::Ordering;
use std::time::Duration;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub model_id: String,
    pub label: String,
    pub accuracy: f64,
    #[serde(rename = "latency_s", with = "crate::secs")]
    pub latency: Duration,
    pub cost: Option<Decimal>,
    pub family: String,
}

impl FrontierPoint {
    /// Higher or equal accuracy and lower or equal latency, strictly better on one.
    pub fn dominates(&self, other: &FrontierPoint) -> bool {
        self.accuracy >= other.accuracy
            && self.latency <= other.latency
            && (self.accuracy > other.accuracy || self.latency < other.latency)
    }
}

/// Points not dominated by any other, sorted by latency (then accuracy
/// descending, then label).
pub fn pareto_frontier(points: &[FrontierPoint]) -> Vec<FrontierPoint> {
    let mut sorted: Vec<&FrontierPoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.latency
            .cmp(&b.latency)
            .then(b.accuracy.partial_cmp(&a.accuracy).unwrap_or(Ordering::Equal))
            .then_with(|| a.label.cmp(&b.label))
    });
    // After the sort, a point survives iff its accuracy beats every strictly
    // faster point and matches the best accuracy at its own latency.
    let mut out: Vec<FrontierPoint> = Vec::new();
    let mut best_faster = f64::NEG_INFINITY;
    let mut i = 0;
    while i < sorted.len() {
        let lat = sorted[i].latency;
        let mut j = i;
        while j < sorted.len() && sorted[j].latency == lat {
            j += 1;
        }
        let group_best = sorted[i].accuracy;
        for p in &sorted[i..j] {
            if p.accuracy == group_best && p.accuracy > best_faster {
                out.push((*p).clone());
            }
        }
        best_faster = best_faster.max(group_best);
        i = j;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(label: &str, acc: f64, lat: f64) -> FrontierPoint {
        FrontierPoint {
            model_id: label.into(),
            label: label.into(),
            accuracy: acc,
            latency: Duration::from_secs_f64(lat),
            cost: None,
            family: "f".into(),
        }
    }

    #[test]
    fn same_latency_higher_accuracy_wins() {
        let pts = vec![pt("haiku", 0.64, 7.5), pt("high", 0.93, 27.9), pt("A", 0.82, 15.0), pt("B", 0.86, 15.0)];
        let f: Vec<String> = pareto_frontier(&pts).into_iter().map(|p| p.label).collect();
        assert_eq!(f, vec!["haiku", "B", "high"]);
    }

    #[test]
    fn exact_ties_both_kept() {
        let pts = vec![pt("a", 0.5, 1.0), pt("b", 0.5, 1.0)];
        assert_eq!(pareto_frontier(&pts).len(), 2);
    }

    #[test]
    fn slower_equal_accuracy_dropped() {
        let pts = vec![pt("a", 0.5, 1.0), pt("b", 0.5, 2.0)];
        assert_eq!(pareto_frontier(&pts).len(), 1);
    }
}
