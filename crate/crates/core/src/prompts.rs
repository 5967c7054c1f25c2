//! Prompt templates and their rendering.
//!
//! The built-in templates live in `templates/*.txt` and are compiled in; a
//! [`TemplateSet`] can also be loaded from a directory with the same file names.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::model::{Message, Sample, SampleError, TaskInput, TaskKind};

pub const TRANSLATION_TEMPLATE: &str = include_str!("../templates/translation.txt");
pub const MATH_TEMPLATE: &str = include_str!("../templates/math.txt");
pub const SQL_TEMPLATE: &str = include_str!("../templates/sql.txt");
pub const SENTIMENT_TEMPLATE: &str = include_str!("../templates/sentiment.txt");
pub const REFLECTION_TEMPLATE: &str = include_str!("../templates/reflection.txt");
pub const JUDGE_TEMPLATE: &str = include_str!("../templates/judge.txt");

/// Date stamped into the text-to-SQL prompt unless overridden.
pub const DEFAULT_SQL_PROMPT_DATE: &str = "16/04/2025";

/// Every placeholder name used by the built-in templates.
pub const PLACEHOLDERS: &[&str] = &[
    "language",
    "source",
    "problem",
    "date",
    "table_name_and_schema",
    "question",
    "review",
    "feedback_mechanism_output",
    "first_user_message",
    "user_query",
    "context",
];

#[derive(Debug, Error)]
pub enum PromptError {
    #[error(transparent)]
    MissingField(#[from] SampleError),
    #[error("template {name}: {source}")]
    Io {
        name: String,
        #[source]
        source: std::io::Error,
    },
    #[error("template {name} references unknown placeholder {{{placeholder}}}")]
    UnknownPlaceholder { name: String, placeholder: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub translation: String,
    pub math: String,
    pub sql: String,
    pub sentiment: String,
    pub reflection: String,
    pub judge: String,
    pub sql_date: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            translation: TRANSLATION_TEMPLATE.to_string(),
            math: MATH_TEMPLATE.to_string(),
            sql: SQL_TEMPLATE.to_string(),
            sentiment: SENTIMENT_TEMPLATE.to_string(),
            reflection: REFLECTION_TEMPLATE.to_string(),
            judge: JUDGE_TEMPLATE.to_string(),
            sql_date: DEFAULT_SQL_PROMPT_DATE.to_string(),
        }
    }
}

impl TemplateSet {
    /// Loads `translation.txt`, `math.txt`, `sql.txt`, `sentiment.txt`,
    /// `reflection.txt` and `judge.txt` from `dir`. Missing files fall back to the
    /// built-in text.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::default();
        let slots: [(&str, &mut String); 6] = [
            ("translation", &mut set.translation),
            ("math", &mut set.math),
            ("sql", &mut set.sql),
            ("sentiment", &mut set.sentiment),
            ("reflection", &mut set.reflection),
            ("judge", &mut set.judge),
        ];
        for (name, slot) in slots {
            let path = dir.join(format!("{name}.txt"));
            if !path.exists() {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|source| PromptError::Io {
                name: name.to_string(),
                source,
            })?;
            for placeholder in placeholders_in(&text) {
                if !PLACEHOLDERS.contains(&placeholder.as_str()) {
                    return Err(PromptError::UnknownPlaceholder {
                        name: name.to_string(),
                        placeholder,
                    });
                }
            }
            *slot = text.trim_end_matches(['\n', '\r']).to_string();
        }
        Ok(set)
    }

    pub fn template_for(&self, task: TaskKind) -> &str {
        match task {
            TaskKind::Translation => &self.translation,
            TaskKind::MathReasoning => &self.math,
            TaskKind::TextToSql => &self.sql,
            TaskKind::Sentiment => &self.sentiment,
        }
    }

    /// Renders the round-0 user message for a sample.
    pub fn initial_prompt(&self, sample: &Sample) -> Result<Message, PromptError> {
        sample.validate()?;
        let mut values: HashMap<&str, String> = HashMap::new();
        match &sample.input {
            TaskInput::Translation {
                source,
                target_language,
                ..
            } => {
                values.insert("language", target_language.clone());
                values.insert("source", source.clone());
            }
            TaskInput::MathReasoning { problem } => {
                values.insert("problem", problem.clone());
            }
            TaskInput::TextToSql {
                question, schema, ..
            } => {
                let ddl: Vec<String> = schema.iter().map(|t| t.to_ddl()).collect();
                values.insert("date", self.sql_date.clone());
                values.insert("table_name_and_schema", ddl.join("\n\n"));
                values.insert("question", question.clone());
            }
            TaskInput::Sentiment { review } => {
                values.insert("review", review.clone());
            }
        }
        Ok(Message::user(render(self.template_for(sample.task()), &values)))
    }

    /// Renders the self-reflection follow-up. An absent feedback output leaves the
    /// feedback slot empty.
    pub fn reflection_prompt(&self, first_user_message: &str, feedback: Option<&str>) -> Message {
        let mut values = HashMap::new();
        values.insert("feedback_mechanism_output", feedback.unwrap_or("").to_string());
        values.insert("first_user_message", first_user_message.to_string());
        Message::user(render(&self.reflection, &values))
    }

    pub fn judge_prompt(&self, user_query: &str, context: &str) -> Message {
        let mut values = HashMap::new();
        values.insert("user_query", user_query.to_string());
        values.insert("context", context.to_string());
        Message::user(render(&self.judge, &values))
    }
}

/// Builds the initial prompt with the built-in templates.
pub fn build_initial_prompt(sample: &Sample) -> Result<Message, PromptError> {
    TemplateSet::default().initial_prompt(sample)
}

/// Builds the reflection prompt with the built-in template.
pub fn build_reflection_prompt(first_user_message: &str, feedback_output: Option<&str>) -> Message {
    TemplateSet::default().reflection_prompt(first_user_message, feedback_output)
}

/// Single-pass substitution of `{name}` for every name present in `values`.
/// Substituted text is never rescanned, so braces inside values survive untouched.
pub fn render(template: &str, values: &HashMap<&str, String>) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if values.contains_key(&after[..close]) => {
                out.push_str(&values[&after[..close]]);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn placeholders_in(template: &str) -> Vec<String> {
    let mut found = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        if let Some(close) = after.find('}') {
            let name = &after[..close];
            if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                found.push(name.to_string());
            }
        }
        rest = after;
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ColumnSchema, TableSchema};
    use proptest::prelude::*;

    fn math(problem: &str) -> Sample {
        Sample {
            id: "m1".into(),
            input: TaskInput::MathReasoning {
                problem: problem.into(),
            },
            gold: "2".into(),
        }
    }

    #[test]
    fn math_prompt_carries_answer_tag_instruction() {
        let m = build_initial_prompt(&math("1+1?")).unwrap();
        assert_eq!(
            m.content,
            "What is the answer to the following math problem: 1+1?. Make sure to always state your final answer in <answer> </answer> tags."
        );
        assert!(m
            .content
            .contains("Make sure to always state your final answer in <answer> </answer> tags."));
    }

    #[test]
    fn sentiment_prompt() {
        let s = Sample {
            id: "s".into(),
            input: TaskInput::Sentiment {
                review: "Great film.".into(),
            },
            gold: "positive".into(),
        };
        let m = build_initial_prompt(&s).unwrap();
        assert!(m
            .content
            .contains("Please output only the sentiment in <sentiment></sentiment> XML tags."));
        assert!(m.content.ends_with("Review to be classified: Great film."));
    }

    #[test]
    fn translation_prompt_substitutes_language_and_source() {
        let s = Sample {
            id: "t".into(),
            input: TaskInput::Translation {
                source: "Good morning".into(),
                target_language: "German".into(),
                source_language: Some("English".into()),
            },
            gold: "Guten Morgen".into(),
        };
        let m = build_initial_prompt(&s).unwrap();
        assert_eq!(
            m.content,
            "Translate the following text into German. Please output only the translated text with no prefix or introduction and put in in <translation></translation> XML tags.\n\nText to be translated: Good morning"
        );
    }

    #[test]
    fn sql_prompt_renders_ddl_and_date() {
        let s = Sample {
            id: "q".into(),
            input: TaskInput::TextToSql {
                question: "How many voters?".into(),
                db_id: "voter_1".into(),
                schema: vec![
                    TableSchema {
                        name: "votes".into(),
                        columns: vec![ColumnSchema {
                            name: "vote_id".into(),
                            sql_type: "number".into(),
                        }],
                        primary_key: vec![],
                        foreign_keys: vec![],
                    },
                    TableSchema {
                        name: "area".into(),
                        columns: vec![ColumnSchema {
                            name: "state".into(),
                            sql_type: "text".into(),
                        }],
                        primary_key: vec![],
                        foreign_keys: vec![],
                    },
                ],
                db_path: "voter_1.sqlite".into(),
            },
            gold: "SELECT count(*) FROM votes".into(),
        };
        let m = build_initial_prompt(&s).unwrap();
        assert!(m.content.contains("today's date is 16/04/2025."));
        assert!(m.content.contains(
            "CREATE TABLE votes (\n  vote_id number\n);\n\nCREATE TABLE area (\n  state text\n);"
        ));
        assert!(m.content.ends_with("Here is the question:How many voters?"));

        let set = TemplateSet {
            sql_date: "01/01/2030".into(),
            ..TemplateSet::default()
        };
        assert!(set
            .initial_prompt(&s)
            .unwrap()
            .content
            .contains("today's date is 01/01/2030."));
    }

    #[test]
    fn missing_payload_is_an_error() {
        assert!(matches!(
            build_initial_prompt(&math("  ")),
            Err(PromptError::MissingField(_))
        ));
    }

    #[test]
    fn reflection_prompt_without_feedback() {
        let m = build_reflection_prompt("Q?", None);
        assert_eq!(
            m.content,
            "Please reiterate your answer by thinking step by step, making sure to state your answer at the end of the response.\n\n\n\nAs a reminder, the original question is Q?"
        );
    }

    #[test]
    fn reflection_prompt_embeds_feedback() {
        let m = build_reflection_prompt("Q?", Some("Judge: INCORRECT: wrong join"));
        let fb = m.content.find("Judge: INCORRECT").unwrap();
        let reiterate = m.content.find("Please reiterate").unwrap();
        let reminder = m.content.find("As a reminder").unwrap();
        assert!(reiterate < fb && fb < reminder);
        assert!(m.content.ends_with("As a reminder, the original question is Q?"));
        assert_eq!(m, build_reflection_prompt("Q?", Some("Judge: INCORRECT: wrong join")));
    }

    #[test]
    fn judge_prompt_contains_question_and_answer() {
        let m = TemplateSet::default().judge_prompt("What is 2+2?", "<answer>4</answer>");
        assert!(m.content.contains("User question: What is 2+2?"));
        assert!(m.content.contains("Provided response: <answer>4</answer>"));
        assert!(m.content.contains("Make a binary judgment: CORRECT or INCORRECT"));
    }

    #[test]
    fn values_are_not_rescanned() {
        let m = build_initial_prompt(&math("\\frac{1}{2} + {problem}")).unwrap();
        assert!(m.content.contains("\\frac{1}{2} + {problem}"));
    }

    #[test]
    fn load_dir_overrides_and_rejects_unknown_placeholders() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("math.txt"), "Solve: {problem}\n").unwrap();
        let set = TemplateSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.math, "Solve: {problem}");
        assert_eq!(set.sentiment, SENTIMENT_TEMPLATE);
        fs::write(dir.path().join("judge.txt"), "{bogus}").unwrap();
        assert!(matches!(
            TemplateSet::load_dir(dir.path()),
            Err(PromptError::UnknownPlaceholder { .. })
        ));
    }

    fn no_known_placeholder(s: &str) -> bool {
        PLACEHOLDERS.iter().all(|p| !s.contains(&format!("{{{p}}}")))
    }

    proptest! {
        #[test]
        fn rendering_is_deterministic_and_complete(problem in "[a-z0-9 +*/{}^]{1,40}") {
            prop_assume!(!problem.trim().is_empty() && no_known_placeholder(&problem));
            let a = build_initial_prompt(&math(&problem)).unwrap();
            let b = build_initial_prompt(&math(&problem)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(no_known_placeholder(&a.content));
            let r = build_reflection_prompt(&a.content, Some(&problem));
            prop_assert!(no_known_placeholder(&r.content));
        }
    }
}
