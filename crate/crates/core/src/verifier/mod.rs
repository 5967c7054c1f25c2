//! Task-specific scoring of model answers.

mod extract;
mod latex;
pub mod meteor;
pub mod sql;
pub mod symbolic;

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{extract_tagged, ExtractionFailed};
pub use latex::{normalize_latex, LatexNormalizer, DEFAULT_UNIT_WORDS};
pub use meteor::{meteor, Meteor, Stemmer, SuffixStemmer, SynonymTable};
pub use sql::{execute_sql, open_read_only, partial_credit, tables_match, Cell, ExecError, ResultTable};
pub use symbolic::symbolic_equivalent;

use crate::model::{Sample, TaskInput};

pub const DEFAULT_TRANSLATION_PASS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictMethod {
    StringMatch,
    SymbolicEquiv,
    ExecMatch,
    PartialCredit,
    TagMatch,
    Meteor,
    ExtractionFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub score: f64,
    pub pass: bool,
    pub method: VerdictMethod,
    #[serde(default)]
    pub detail: String,
}

impl VerdictRecord {
    pub fn new(score: f64, pass: bool, method: VerdictMethod, detail: impl Into<String>) -> Self {
        Self {
            score: score.clamp(0.0, 1.0),
            pass,
            method,
            detail: detail.into(),
        }
    }

    pub fn binary(ok: bool, method: VerdictMethod, detail: impl Into<String>) -> Self {
        Self::new(if ok { 1.0 } else { 0.0 }, ok, method, detail)
    }

    pub fn extraction_failed(e: &ExtractionFailed) -> Self {
        Self::new(0.0, false, VerdictMethod::ExtractionFailed, e.to_string())
    }
}

/// Raised when the dataset itself is broken, e.g. the gold SQL does not run.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("sample {sample_id}: {message}")]
pub struct DatasetError {
    pub sample_id: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Verifier {
    pub normalizer: LatexNormalizer,
    pub meteor: Meteor,
    pub symbolic_seed: u64,
    pub translation_pass: f64,
    pub sql_timeout: Duration,
}

impl Default for Verifier {
    fn default() -> Self {
        Self {
            normalizer: LatexNormalizer::default(),
            meteor: Meteor::default(),
            symbolic_seed: symbolic::DEFAULT_SEED,
            translation_pass: DEFAULT_TRANSLATION_PASS,
            sql_timeout: sql::DEFAULT_TIMEOUT,
        }
    }
}

impl Verifier {
    pub fn score_math(&self, candidate_text: &str, gold: &str) -> VerdictRecord {
        let answer = match extract_tagged(candidate_text, "answer") {
            Ok(a) => a,
            Err(e) => return VerdictRecord::extraction_failed(&e),
        };
        let a = self.normalizer.normalize(&answer);
        let g = self.normalizer.normalize(gold);
        if a == g {
            return VerdictRecord::binary(true, VerdictMethod::StringMatch, a);
        }
        let eq = symbolic::symbolic_equivalent_seeded(&a, &g, self.symbolic_seed);
        VerdictRecord::binary(eq, VerdictMethod::SymbolicEquiv, format!("{a} vs {g}"))
    }

    pub fn score_sentiment(&self, candidate_text: &str, gold_label: &str) -> VerdictRecord {
        match extract_tagged(candidate_text, "sentiment") {
            Ok(label) => {
                let label = label.trim().to_lowercase();
                let ok = label == gold_label.trim().to_lowercase();
                VerdictRecord::binary(ok, VerdictMethod::TagMatch, label)
            }
            Err(e) => VerdictRecord::extraction_failed(&e),
        }
    }

    pub fn score_translation(&self, candidate_text: &str, reference: &str) -> VerdictRecord {
        match extract_tagged(candidate_text, "translation") {
            Ok(t) => {
                let st = self.meteor.stats(&t, reference);
                VerdictRecord::new(
                    st.score,
                    st.score >= self.translation_pass,
                    VerdictMethod::Meteor,
                    format!("matches={} chunks={}", st.matches, st.chunks),
                )
            }
            Err(e) => VerdictRecord::extraction_failed(&e),
        }
    }

    /// Scores already-extracted SQL on an open connection. `Err` carries the
    /// gold query's failure.
    pub fn score_sql_on(
        &self,
        conn: &rusqlite::Connection,
        pred_sql: &str,
        gold_sql: &str,
    ) -> Result<VerdictRecord, ExecError> {
        let gold = sql::execute_sql_with_timeout(conn, gold_sql, self.sql_timeout)?;
        let pred = match sql::execute_sql_with_timeout(conn, pred_sql, self.sql_timeout) {
            Ok(t) => t,
            Err(e) => {
                return Ok(VerdictRecord::new(0.0, false, VerdictMethod::ExecMatch, e.to_string()))
            }
        };
        if sql::tables_match(&pred, &gold) {
            return Ok(VerdictRecord::binary(true, VerdictMethod::ExecMatch, ""));
        }
        let score = sql::partial_credit(&pred, &gold);
        Ok(VerdictRecord::new(
            score,
            score >= 1.0,
            VerdictMethod::PartialCredit,
            format!("{} rows vs {} gold rows", pred.rows.len(), gold.rows.len()),
        ))
    }

    /// Extracts `<SQL>` from a model response and scores it against the database file.
    pub fn score_sql(
        &self,
        sample_id: &str,
        candidate_text: &str,
        gold_sql: &str,
        db_path: &Path,
    ) -> Result<VerdictRecord, DatasetError> {
        let dataset_err = |message: String| DatasetError {
            sample_id: sample_id.to_string(),
            message,
        };
        let conn = open_read_only(db_path).map_err(|e| dataset_err(e.to_string()))?;
        let pred = match extract_tagged(candidate_text, "SQL") {
            Ok(p) => p,
            Err(e) => {
                // still surface a broken gold query
                sql::execute_sql_with_timeout(&conn, gold_sql, self.sql_timeout)
                    .map_err(|e| dataset_err(format!("gold query failed: {e}")))?;
                return Ok(VerdictRecord::extraction_failed(&e));
            }
        };
        self.score_sql_on(&conn, &pred, gold_sql)
            .map_err(|e| dataset_err(format!("gold query failed: {e}")))
    }

    /// Scores a response for whichever task the sample belongs to.
    pub fn score(&self, sample: &Sample, response_text: &str) -> Result<VerdictRecord, DatasetError> {
        Ok(match &sample.input {
            TaskInput::Translation { .. } => self.score_translation(response_text, &sample.gold),
            TaskInput::MathReasoning { .. } => self.score_math(response_text, &sample.gold),
            TaskInput::Sentiment { .. } => self.score_sentiment(response_text, &sample.gold),
            TaskInput::TextToSql { db_path, .. } => {
                return self.score_sql(&sample.id, response_text, &sample.gold, db_path)
            }
        })
    }
}

pub fn score_math(candidate_text: &str, gold: &str) -> VerdictRecord {
    Verifier::default().score_math(candidate_text, gold)
}

pub fn score_sentiment(candidate_text: &str, gold_label: &str) -> VerdictRecord {
    Verifier::default().score_sentiment(candidate_text, gold_label)
}

pub fn score_translation(candidate_text: &str, reference: &str) -> VerdictRecord {
    Verifier::default().score_translation(candidate_text, reference)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn math_examples() {
        let v = score_math("<answer>\\dfrac{1}{2}</answer>", "\\frac{1}{2}");
        assert_eq!((v.score, v.method), (1.0, VerdictMethod::StringMatch));
        let v = score_math("<answer>0.5</answer>", "\\frac{1}{2}");
        assert_eq!((v.score, v.method), (1.0, VerdictMethod::SymbolicEquiv));
        let v = score_math("0.5", "\\frac{1}{2}");
        assert_eq!((v.score, v.method), (0.0, VerdictMethod::ExtractionFailed));
        assert!(!score_math("<answer>3</answer>", "4").pass);
    }

    #[test]
    fn sentiment_examples() {
        assert_eq!(score_sentiment("<sentiment>Positive</sentiment>", "positive").score, 1.0);
        assert_eq!(score_sentiment("<sentiment>negative</sentiment>", "positive").score, 0.0);
        let v = score_sentiment("positive", "positive");
        assert_eq!((v.score, v.method), (0.0, VerdictMethod::ExtractionFailed));
    }

    #[test]
    fn translation_requires_tags() {
        let v = score_translation("Bonjour le monde", "Bonjour le monde");
        assert_eq!(v.method, VerdictMethod::ExtractionFailed);
        let v = score_translation("<translation>Bonjour le monde</translation>", "Bonjour le monde");
        assert!(v.pass && v.score > 0.9);
    }

    #[test]
    fn sql_scoring() {
        let conn = rusqlite::Connection::open_in_memory().unwrap();
        conn.execute_batch(
            "CREATE TABLE t (a TEXT, b TEXT); INSERT INTO t VALUES ('a','b'),('c','d');",
        )
        .unwrap();
        let v = Verifier::default();
        let r = v.score_sql_on(&conn, "SELECT * FROM t", "SELECT * FROM t").unwrap();
        assert_eq!(r.score, 1.0);
        let r = v.score_sql_on(&conn, "SELECT a, b FROM t WHERE a='a'", "SELECT * FROM t").unwrap();
        assert_eq!((r.score, r.method), (0.5, VerdictMethod::PartialCredit));
        let r = v.score_sql_on(&conn, "SELEC", "SELECT * FROM t").unwrap();
        assert_eq!(r.score, 0.0);
        assert!(v.score_sql_on(&conn, "SELECT 1", "SELEC").is_err());
    }
}
