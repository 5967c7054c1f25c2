use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Status changes between round `from_round` and the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BoundaryCounts {
    pub from_round: usize,
    pub correct_to_correct: usize,
    pub correct_to_incorrect: usize,
    pub incorrect_to_correct: usize,
    pub incorrect_to_incorrect: usize,
}

impl BoundaryCounts {
    pub fn total(&self) -> usize {
        self.correct_to_correct
            + self.correct_to_incorrect
            + self.incorrect_to_correct
            + self.incorrect_to_incorrect
    }

    /// Share of the errors at `from_round` fixed in the next round.
    pub fn fraction_corrected(&self) -> Option<f64> {
        let errors = self.incorrect_to_correct + self.incorrect_to_incorrect;
        (errors > 0).then(|| self.incorrect_to_correct as f64 / errors as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub n: usize,
    pub rounds: usize,
    /// Accuracy at round 0, needed to replay the trajectory.
    pub initial_correct: usize,
    pub boundaries: Vec<BoundaryCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyNode {
    pub id: usize,
    pub name: String,
    pub round: usize,
    pub correct: bool,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyLink {
    pub source: usize,
    pub target: usize,
    pub value: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyExport {
    pub nodes: Vec<SankeyNode>,
    pub links: Vec<SankeyLink>,
}

impl TransitionMatrix {
    /// Per-round accuracy reconstructed from the boundary counts.
    pub fn accuracy_trajectory(&self) -> Vec<f64> {
        if self.n == 0 {
            return Vec::new();
        }
        let n = self.n as f64;
        let mut out = vec![self.initial_correct as f64 / n];
        for b in &self.boundaries {
            out.push((b.correct_to_correct + b.incorrect_to_correct) as f64 / n);
        }
        out
    }

    /// Node ids are `2 * round` (correct) and `2 * round + 1` (incorrect).
    /// Zero-valued links are omitted.
    pub fn sankey(&self) -> SankeyExport {
        let mut correct = vec![self.initial_correct];
        for b in &self.boundaries {
            correct.push(b.correct_to_correct + b.incorrect_to_correct);
        }
        let mut nodes = Vec::new();
        for (round, c) in correct.iter().enumerate() {
            for ok in [true, false] {
                nodes.push(SankeyNode {
                    id: 2 * round + usize::from(!ok),
                    name: format!("Round {round} {}", if ok { "correct" } else { "incorrect" }),
                    round,
                    correct: ok,
                    count: if ok { *c } else { self.n - c },
                });
            }
        }
        let mut links = Vec::new();
        for b in &self.boundaries {
            let (c0, i0) = (2 * b.from_round, 2 * b.from_round + 1);
            let (c1, i1) = (c0 + 2, i0 + 2);
            for (s, t, v) in [
                (c0, c1, b.correct_to_correct),
                (c0, i1, b.correct_to_incorrect),
                (i0, c1, b.incorrect_to_correct),
                (i0, i1, b.incorrect_to_incorrect),
            ] {
                if v > 0 {
                    links.push(SankeyLink { source: s, target: t, value: v });
                }
            }
        }
        SankeyExport { nodes, links }
    }
}

/// `per_sample[i][r]` is whether sample `i` passed at round `r`.
pub fn transitions(per_sample: &[Vec<bool>]) -> Result<TransitionMatrix, AnalysisError> {
    let Some(first) = per_sample.first() else {
        return Err(AnalysisError::EmptyInput);
    };
    let rounds = first.len();
    if rounds == 0 || per_sample.iter().any(|s| s.len() != rounds) {
        return Err(AnalysisError::RaggedInput);
    }
    let mut boundaries: Vec<BoundaryCounts> = (0..rounds - 1)
        .map(|from_round| BoundaryCounts {
            from_round,
            ..Default::default()
        })
        .collect();
    for s in per_sample {
        for (r, b) in boundaries.iter_mut().enumerate() {
            match (s[r], s[r + 1]) {
                (true, true) => b.correct_to_correct += 1,
                (true, false) => b.correct_to_incorrect += 1,
                (false, true) => b.incorrect_to_correct += 1,
                (false, false) => b.incorrect_to_incorrect += 1,
            }
        }
    }
    Ok(TransitionMatrix {
        n: per_sample.len(),
        rounds,
        initial_correct: per_sample.iter().filter(|s| s[0]).count(),
        boundaries,
    })
}
