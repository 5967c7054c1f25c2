//! Feedback injected before reflection rounds.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::model::{FeedbackKind, Message, TokenUsage};
use crate::prompts::TemplateSet;
use crate::provider::{ChatProvider, GenerationParams, ProviderError};
use crate::verifier::sql::{execute_sql_with_timeout, open_read_only, DEFAULT_TIMEOUT};

/// Rows of a result table shown to the model.
pub const FEEDBACK_ROW_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackResult {
    pub text: String,
    #[serde(rename = "latency_s", with = "crate::secs")]
    pub latency: Duration,
    pub usage: TokenUsage,
    pub mechanism: FeedbackKind,
    #[serde(default)]
    pub usage_estimated: bool,
}

impl FeedbackResult {
    pub fn none() -> Self {
        Self {
            text: String::new(),
            latency: Duration::ZERO,
            usage: TokenUsage::default(),
            mechanism: FeedbackKind::None,
            usage_estimated: false,
        }
    }
}

/// Asks the judge model about one answer and returns its full reply.
pub fn judge_feedback(
    templates: &TemplateSet,
    user_query: &str,
    candidate: &str,
    judge: &dyn ChatProvider,
    params: &GenerationParams,
) -> Result<FeedbackResult, ProviderError> {
    let prompt = templates.judge_prompt(user_query, candidate);
    let response = judge.complete(&[prompt], params)?;
    Ok(FeedbackResult {
        text: response.text,
        latency: response.latency,
        usage: response.usage,
        mechanism: FeedbackKind::LlmJudge,
        usage_estimated: response.usage_estimated,
    })
}

/// Runs the candidate query read-only; errors become the feedback text.
pub fn sql_execution_feedback(candidate_sql: &str, db_path: &Path) -> FeedbackResult {
    let start = Instant::now();
    let text = match open_read_only(db_path)
        .and_then(|conn| execute_sql_with_timeout(&conn, candidate_sql, DEFAULT_TIMEOUT))
    {
        Ok(table) => format!(
            "Result of executing the SQL query:\n{}",
            table.to_tsv(FEEDBACK_ROW_CAP)
        ),
        Err(e) => format!("Executing the SQL query failed: {e}"),
    };
    FeedbackResult {
        text,
        latency: start.elapsed(),
        usage: TokenUsage::default(),
        mechanism: FeedbackKind::SqlExecution,
        usage_estimated: false,
    }
}

/// First user message of a transcript, the anchor for judge and reminder text.
pub fn first_user_message(transcript: &[Message]) -> Option<&str> {
    transcript
        .iter()
        .find(|m| m.role == crate::model::Role::User)
        .map(|m| m.content.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{MockProvider, MockRule, MockScript};

    #[test]
    fn judge_text_passes_through() {
        let judge = MockProvider::new(
            MockScript::new(vec![MockRule::by_round(None, &["CORRECT - matches schema"])]),
            0,
        );
        let r = judge_feedback(
            &TemplateSet::default(),
            "How many singers?",
            "<SQL>SELECT count(*) FROM singer</SQL>",
            &judge,
            &GenerationParams::default(),
        )
        .unwrap();
        assert_eq!(r.text, "CORRECT - matches schema");
        assert_eq!(r.mechanism, FeedbackKind::LlmJudge);
        assert!(r.usage.input_tokens > 0);
    }

    #[test]
    fn sql_feedback_table_and_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.sqlite");
        rusqlite::Connection::open(&path)
            .unwrap()
            .execute_batch("CREATE TABLE t (a)")
            .unwrap();
        let ok = sql_execution_feedback("SELECT 1", &path);
        assert!(ok.text.ends_with("1\n1"), "{}", ok.text);
        assert!(ok.usage.is_zero());
        let bad = sql_execution_feedback("SELEC 1", &path);
        assert!(bad.text.contains("syntax error"), "{}", bad.text);
    }
}
