//! Aggregation over traces: accuracy, gains, frontiers, transitions and
//! significance tests.

mod pareto;
pub mod stats;
mod summary;
mod transitions;

use thiserror::Error;

pub use pareto::{pareto_frontier, FrontierPoint};
pub use stats::{
    bootstrap_accuracies, friedman_test, nemenyi_posthoc, studentized_range_cdf, welch_t_test,
    FriedmanResult, WelchResult,
};
pub use summary::{
    gains_table, group_by_label, pass_matrix, reflection_curves, summarize, trace_score,
    ConfigSummary, GainRow, LatencyStat, ReflectionCurve,
};
pub use transitions::{transitions, BoundaryCounts, SankeyExport, SankeyLink, SankeyNode, TransitionMatrix};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("no input values")]
    EmptyInput,
    #[error("baseline accuracy is zero")]
    ZeroBaseline,
    #[error("samples have differing round counts")]
    RaggedInput,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

pub fn accuracy(scores: &[f64]) -> Result<f64, AnalysisError> {
    if scores.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Percentage change of `acc_k` over `acc_0`.
pub fn relative_gain(acc_k: f64, acc_0: f64) -> Result<f64, AnalysisError> {
    if acc_0 <= 0.0 {
        return Err(AnalysisError::ZeroBaseline);
    }
    Ok(100.0 * (acc_k - acc_0) / acc_0)
}
