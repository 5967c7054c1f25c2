//! Shared domain types: tasks, samples, chat messages, strategies and token usage.

use std::fmt;
use std::ops::{Add, AddAssign};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The four benchmark domains. Each maps to one prompt template and one verifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Translation,
    MathReasoning,
    TextToSql,
    Sentiment,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::Translation,
        TaskKind::MathReasoning,
        TaskKind::TextToSql,
        TaskKind::Sentiment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Translation => "translation",
            TaskKind::MathReasoning => "math_reasoning",
            TaskKind::TextToSql => "text_to_sql",
            TaskKind::Sentiment => "sentiment",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One column of a relational table as described by a dataset schema file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(rename = "type")]
    pub sql_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub column: String,
    pub ref_table: String,
    pub ref_column: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<ColumnSchema>,
    #[serde(default)]
    pub primary_key: Vec<String>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
}

impl TableSchema {
    /// Renders the table as a `CREATE TABLE` statement.
    pub fn to_ddl(&self) -> String {
        let mut lines: Vec<String> = self
            .columns
            .iter()
            .map(|c| format!("  {} {}", c.name, c.sql_type))
            .collect();
        if !self.primary_key.is_empty() {
            lines.push(format!("  PRIMARY KEY ({})", self.primary_key.join(", ")));
        }
        for fk in &self.foreign_keys {
            lines.push(format!(
                "  FOREIGN KEY ({}) REFERENCES {}({})",
                fk.column, fk.ref_table, fk.ref_column
            ));
        }
        format!("CREATE TABLE {} (\n{}\n);", self.name, lines.join(",\n"))
    }
}

/// Task-specific input payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskInput {
    Translation {
        source: String,
        target_language: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source_language: Option<String>,
    },
    MathReasoning {
        problem: String,
    },
    TextToSql {
        question: String,
        db_id: String,
        schema: Vec<TableSchema>,
        db_path: PathBuf,
    },
    Sentiment {
        review: String,
    },
}

impl TaskInput {
    pub fn task(&self) -> TaskKind {
        match self {
            TaskInput::Translation { .. } => TaskKind::Translation,
            TaskInput::MathReasoning { .. } => TaskKind::MathReasoning,
            TaskInput::TextToSql { .. } => TaskKind::TextToSql,
            TaskInput::Sentiment { .. } => TaskKind::Sentiment,
        }
    }
}

/// A benchmark example. `gold` holds the reference translation, answer expression,
/// gold SQL text or sentiment label depending on the task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub input: TaskInput,
    pub gold: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    #[error("sample id is empty")]
    EmptyId,
    #[error("sample {id}: required field `{field}` is missing or empty")]
    MissingField { id: String, field: &'static str },
}

impl Sample {
    pub fn task(&self) -> TaskKind {
        self.input.task()
    }

    /// Checks that every payload field required by the task is present.
    pub fn validate(&self) -> Result<(), SampleError> {
        if self.id.trim().is_empty() {
            return Err(SampleError::EmptyId);
        }
        let missing = |field| SampleError::MissingField {
            id: self.id.clone(),
            field,
        };
        match &self.input {
            TaskInput::Translation {
                source,
                target_language,
                ..
            } => {
                if source.trim().is_empty() {
                    return Err(missing("source"));
                }
                if target_language.trim().is_empty() {
                    return Err(missing("target_language"));
                }
            }
            TaskInput::MathReasoning { problem } => {
                if problem.trim().is_empty() {
                    return Err(missing("problem"));
                }
            }
            TaskInput::TextToSql {
                question, db_id, ..
            } => {
                if question.trim().is_empty() {
                    return Err(missing("question"));
                }
                if db_id.trim().is_empty() {
                    return Err(missing("db_id"));
                }
            }
            TaskInput::Sentiment { review } => {
                if review.trim().is_empty() {
                    return Err(missing("review"));
                }
            }
        }
        if self.gold.trim().is_empty() {
            return Err(missing("gold"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    /// Marks the end of a reusable prompt-cache prefix.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub cache_checkpoint: bool,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }

    fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            cache_checkpoint: false,
        }
    }

    pub fn with_checkpoint(mut self, checkpoint: bool) -> Self {
        self.cache_checkpoint = checkpoint;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranscriptError {
    #[error("transcript is empty")]
    Empty,
    #[error("message {0} has empty content")]
    EmptyContent(usize),
    #[error("message {index} has role {found:?}, expected {expected:?}")]
    Alternation {
        index: usize,
        expected: Role,
        found: Role,
    },
    #[error("transcript must end with a user message")]
    NotEndingWithUser,
}

/// Checks the user/assistant alternation after an optional leading system message
/// and that the transcript ends with a user turn.
pub fn validate_transcript(messages: &[Message]) -> Result<(), TranscriptError> {
    if messages.is_empty() {
        return Err(TranscriptError::Empty);
    }
    let start = usize::from(messages[0].role == Role::System);
    for (index, m) in messages.iter().enumerate() {
        if m.content.is_empty() {
            return Err(TranscriptError::EmptyContent(index));
        }
        if index < start {
            continue;
        }
        let expected = if (index - start) % 2 == 0 {
            Role::User
        } else {
            Role::Assistant
        };
        if m.role != expected {
            return Err(TranscriptError::Alternation {
                index,
                expected,
                found: m.role,
            });
        }
    }
    if messages.last().map(|m| m.role) != Some(Role::User) {
        return Err(TranscriptError::NotEndingWithUser);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    #[default]
    None,
    LlmJudge,
    SqlExecution,
}

impl FeedbackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackKind::None => "none",
            FeedbackKind::LlmJudge => "llm_judge",
            FeedbackKind::SqlExecution => "sql_execution",
        }
    }
}

/// One inference configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub model_id: String,
    #[serde(default)]
    pub reflection_rounds: u32,
    #[serde(default)]
    pub feedback: FeedbackKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thinking_budget: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_model_id: Option<String>,
    #[serde(default)]
    pub caching_enabled: bool,
    /// Grouping key for per-family frontiers; derived from `model_id` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
}

impl StrategyConfig {
    pub fn new(model_id: impl Into<String>, reflection_rounds: u32) -> Self {
        Self {
            model_id: model_id.into(),
            reflection_rounds,
            feedback: FeedbackKind::None,
            thinking_budget: None,
            judge_model_id: None,
            caching_enabled: false,
            family: None,
        }
    }

    /// Canonical label, also the resume key for trace files.
    pub fn label(&self) -> String {
        let mut label = format!("{}|r{}", self.model_id, self.reflection_rounds);
        if self.feedback != FeedbackKind::None {
            label.push('|');
            label.push_str(self.feedback.as_str());
            if let Some(judge) = &self.judge_model_id {
                label.push(':');
                label.push_str(judge);
            }
        }
        if let Some(budget) = self.thinking_budget {
            label.push_str(&format!("|think{budget}"));
        }
        if self.caching_enabled {
            label.push_str("|cache");
        }
        label
    }

    pub fn family(&self) -> String {
        match &self.family {
            Some(f) if !f.is_empty() => f.clone(),
            _ => self
                .model_id
                .split(['.', ':', '-', '/'])
                .find(|s| !s.is_empty())
                .unwrap_or(&self.model_id)
                .to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyModelId,
    RoundsNotInPaperGrid(u32),
    SqlFeedbackOnNonSqlTask(TaskKind),
    JudgeModelMissing,
    JudgeModelUnexpected,
    ZeroThinkingBudget,
    BudgetWithReflection { budget: u32, rounds: u32 },
    FeedbackWithoutRounds,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyModelId => write!(f, "model_id is empty"),
            Violation::RoundsNotInPaperGrid(r) => {
                write!(f, "reflection_rounds {r} not in {{0, 1, 3}} (paper-parity mode)")
            }
            Violation::SqlFeedbackOnNonSqlTask(t) => {
                write!(f, "sql_execution feedback is only valid for text_to_sql, not {t}")
            }
            Violation::JudgeModelMissing => write!(f, "llm_judge feedback requires judge_model_id"),
            Violation::JudgeModelUnexpected => {
                write!(f, "judge_model_id is set but feedback is not llm_judge")
            }
            Violation::ZeroThinkingBudget => write!(f, "thinking_budget must be positive"),
            Violation::BudgetWithReflection { budget, rounds } => write!(
                f,
                "thinking_budget {budget} combined with {rounds} reflection rounds (paper-parity mode)"
            ),
            Violation::FeedbackWithoutRounds => {
                write!(f, "feedback mechanism set but reflection_rounds is 0")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid strategy: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

/// Checks a strategy against a task. In paper-parity mode reflection rounds must be
/// 0, 1 or 3 and a thinking budget cannot be combined with reflection.
pub fn validate_strategy(
    strategy: &StrategyConfig,
    task: TaskKind,
    paper_parity: bool,
) -> Result<(), ValidationError> {
    let mut violations = Vec::new();
    if strategy.model_id.trim().is_empty() {
        violations.push(Violation::EmptyModelId);
    }
    match strategy.feedback {
        FeedbackKind::SqlExecution if task != TaskKind::TextToSql => {
            violations.push(Violation::SqlFeedbackOnNonSqlTask(task));
        }
        FeedbackKind::LlmJudge if strategy.judge_model_id.is_none() => {
            violations.push(Violation::JudgeModelMissing);
        }
        _ => {}
    }
    if strategy.feedback != FeedbackKind::LlmJudge && strategy.judge_model_id.is_some() {
        violations.push(Violation::JudgeModelUnexpected);
    }
    if strategy.feedback != FeedbackKind::None && strategy.reflection_rounds == 0 {
        violations.push(Violation::FeedbackWithoutRounds);
    }
    if strategy.thinking_budget == Some(0) {
        violations.push(Violation::ZeroThinkingBudget);
    }
    if paper_parity {
        if !matches!(strategy.reflection_rounds, 0 | 1 | 3) {
            violations.push(Violation::RoundsNotInPaperGrid(strategy.reflection_rounds));
        }
        if let Some(budget) = strategy.thinking_budget {
            if strategy.reflection_rounds > 0 {
                violations.push(Violation::BudgetWithReflection {
                    budget,
                    rounds: strategy.reflection_rounds,
                });
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(ValidationError { violations })
    }
}

/// Token counts for one or more calls. `input_tokens` counts prompt tokens billed at
/// the plain input rate; cached prompt tokens are reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
    #[serde(default)]
    pub cache_read_tokens: u64,
    #[serde(default)]
    pub cache_write_tokens: u64,
}

impl TokenUsage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Self {
            input_tokens,
            output_tokens,
            ..Self::default()
        }
    }

    /// All prompt-side tokens regardless of cache status.
    pub fn prompt_tokens(&self) -> u64 {
        self.input_tokens + self.cache_read_tokens + self.cache_write_tokens
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
            cache_read_tokens: self.cache_read_tokens + rhs.cache_read_tokens,
            cache_write_tokens: self.cache_write_tokens + rhs.cache_write_tokens,
        }
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = TokenUsage>>(iter: I) -> Self {
        iter.fold(TokenUsage::default(), Add::add)
    }
}
