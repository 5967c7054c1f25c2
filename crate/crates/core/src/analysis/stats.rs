//! Bootstrap resampling and the Welch, Friedman and Nemenyi tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use statrs::function::erf::erf;

use super::AnalysisError;

/// Printed alongside every significance report.
pub const BOOTSTRAP_CAVEAT: &str = "warning: the tests below treat bootstrap replicates as independent \
observations; replicates resampled from one test set are not independent, so p-values are optimistic";

/// `b` accuracies, each from `n` indices drawn with replacement. Replicate `i`
/// uses its own stream of a generator seeded with `seed`, so two score vectors
/// of the same length are resampled with the same index sets.
pub fn bootstrap_accuracies(scores: &[f64], b: usize, seed: u64) -> Result<Vec<f64>, AnalysisError> {
    if scores.len() < 2 {
        return Err(AnalysisError::EmptyInput);
    }
    let n = scores.len();
    Ok((0..b)
        .map(|i| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            (0..n).map(|_| scores[rng.gen_range(0..n)]).sum::<f64>() / n as f64
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Two-sided Welch t-test.
pub fn welch_t_test(x: &[f64], y: &[f64]) -> Result<WelchResult, AnalysisError> {
    if x.len() < 2 || y.len() < 2 {
        return Err(AnalysisError::EmptyInput);
    }
    let (mx, vx) = mean_var(x);
    let (my, vy) = mean_var(y);
    let (a, b) = (vx / x.len() as f64, vy / y.len() as f64);
    if a + b == 0.0 {
        return Err(AnalysisError::DegenerateInput("both samples have zero variance".into()));
    }
    let t = (mx - my) / (a + b).sqrt();
    let df = (a + b).powi(2) / (a * a / (x.len() as f64 - 1.0) + b * b / (y.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| AnalysisError::DegenerateInput(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(WelchResult { t, df, p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
    /// Mean rank per configuration (1 = lowest score).
    pub mean_ranks: Vec<f64>,
}

fn check_matrix(m: &[Vec<f64>]) -> Result<usize, AnalysisError> {
    let k = m.first().map(Vec::len).unwrap_or(0);
    if m.len() < 2 || k < 3 {
        return Err(AnalysisError::DegenerateInput(
            "need at least 2 replicates and 3 configurations".into(),
        ));
    }
    if m.iter().any(|r| r.len() != k) {
        return Err(AnalysisError::RaggedInput);
    }
    let v0 = m[0][0];
    if m.iter().flatten().all(|v| *v == v0) {
        return Err(AnalysisError::DegenerateInput("all values are identical".into()));
    }
    Ok(k)
}

/// Ranks within a row, ties sharing the average rank.
fn rank_row(row: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
    let mut ranks = vec![0.0; row.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && row[idx[j + 1]] == row[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=j] {
            ranks[p] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn rank_matrix(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    m.iter().map(|r| rank_row(r)).collect()
}

fn mean_ranks(ranks: &[Vec<f64>], k: usize) -> Vec<f64> {
    let n = ranks.len() as f64;
    (0..k).map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

/// Rows are replicates, columns configurations. Tie-corrected statistic.
pub fn friedman_test(m: &[Vec<f64>]) -> Result<FriedmanResult, AnalysisError> {
    let k = check_matrix(m)?;
    let n = m.len() as f64;
    let kf = k as f64;
    let ranks = rank_matrix(m);
    let rank_sums: Vec<f64> = (0..k).map(|j| ranks.iter().map(|r| r[j]).sum()).collect();
    let centre = n * (kf + 1.0) / 2.0;
    let numer = (kf - 1.0) * rank_sums.iter().map(|r| (r - centre).powi(2)).sum::<f64>();
    let denom = ranks.iter().flatten().map(|r| r * r).sum::<f64>() - n * kf * (kf + 1.0).powi(2) / 4.0;
    // every row fully tied: ranks carry no information
    let chi2 = if denom.abs() < 1e-12 { 0.0 } else { numer / denom };
    let df = k - 1;
    let dist = ChiSquared::new(df as f64).map_err(|e| AnalysisError::DegenerateInput(e.to_string()))?;
    let p = if chi2 <= 0.0 { 1.0 } else { dist.sf(chi2) };
    Ok(FriedmanResult {
        chi2,
        df,
        p,
        mean_ranks: mean_ranks(&ranks, k),
    })
}

fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn big_phi(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// P(Q <= q) for the range of `k` standard normals (infinite degrees of
/// freedom), by composite Simpson integration.
pub fn studentized_range_cdf(q: f64, k: usize) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    const STEPS: usize = 4000;
    let (lo, hi) = (-9.0, 9.0 + q);
    let h = (hi - lo) / STEPS as f64;
    let f = |z: f64| phi(z) * (big_phi(z) - big_phi(z - q)).powi(k as i32 - 1);
    let mut s = f(lo) + f(hi);
    for i in 1..STEPS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    (k as f64 * s * h / 3.0).clamp(0.0, 1.0)
}

/// Critical value of the studentized range at level `alpha`, by bisection.
pub fn studentized_range_critical(alpha: f64, k: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, 20.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if studentized_range_cdf(mid, k) < 1.0 - alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Pairwise p-values from mean-rank differences. Symmetric with a unit diagonal.
pub fn nemenyi_posthoc(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let k = check_matrix(m)?;
    let ranks = mean_ranks(&rank_matrix(m), k);
    let se = (k as f64 * (k as f64 + 1.0) / (6.0 * m.len() as f64)).sqrt();
    let mut out = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let z = (ranks[i] - ranks[j]).abs() / se;
            let p = 1.0 - studentized_range_cdf(z * std::f64::consts::SQRT_2, k);
            out[i][j] = p;
            out[j][i] = p;
        }
    }
    Ok(out)
}
