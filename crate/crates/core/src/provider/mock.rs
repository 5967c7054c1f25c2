use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    estimate_cache_usage, token_estimate, ChatProvider, GenerationParams, ModelResponse,
    ProviderError,
};
use crate::model::{Message, Role, TokenUsage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockPick {
    /// Index by the number of assistant turns already in the transcript, clamped
    /// to the last response.
    #[default]
    ByRound,
    /// Index by a seeded hash of the transcript.
    Hash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    /// Substring matched against the first user message; `None` matches anything.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when_contains: Option<String>,
    pub responses: Vec<String>,
    #[serde(default)]
    pub pick: MockPick,
}

impl MockRule {
    pub fn by_round(when_contains: Option<&str>, responses: &[&str]) -> Self {
        Self {
            when_contains: when_contains.map(str::to_string),
            responses: responses.iter().map(|s| s.to_string()).collect(),
            pick: MockPick::ByRound,
        }
    }

    pub fn hashed(when_contains: Option<&str>, responses: &[&str]) -> Self {
        Self {
            pick: MockPick::Hash,
            ..Self::by_round(when_contains, responses)
        }
    }
}

fn default_base_latency() -> f64 {
    0.5
}

fn default_per_token_latency() -> f64 {
    0.01
}

/// Scripted responses plus the synthetic latency model
/// `latency = base + per_token * output_tokens`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default = "default_base_latency")]
    pub base_latency_s: f64,
    #[serde(default = "default_per_token_latency")]
    pub per_token_latency_s: f64,
    /// Fraction of the thinking budget billed as hidden output tokens.
    #[serde(default)]
    pub thinking_fraction: f64,
    pub rules: Vec<MockRule>,
}

impl MockScript {
    pub fn new(rules: Vec<MockRule>) -> Self {
        Self {
            base_latency_s: default_base_latency(),
            per_token_latency_s: default_per_token_latency(),
            thinking_fraction: 0.0,
            rules,
        }
    }
}

/// Deterministic provider: the response is a pure function of the transcript,
/// the script and the seed.
#[derive(Debug, Clone)]
pub struct MockProvider {
    script: MockScript,
    seed: u64,
}

impl MockProvider {
    pub fn new(script: MockScript, seed: u64) -> Self {
        Self { script, seed }
    }

    fn pick<'a>(&self, rule: &'a MockRule, transcript: &[Message]) -> &'a str {
        let n = rule.responses.len();
        let idx = match rule.pick {
            MockPick::ByRound => transcript
                .iter()
                .filter(|m| m.role == Role::Assistant)
                .count()
                .min(n - 1),
            MockPick::Hash => {
                let mut hasher = Sha256::new();
                hasher.update(self.seed.to_le_bytes());
                for m in transcript {
                    hasher.update([m.role as u8]);
                    hasher.update((m.content.len() as u64).to_le_bytes());
                    hasher.update(m.content.as_bytes());
                }
                let digest = hasher.finalize();
                let mut word = [0u8; 8];
                word.copy_from_slice(&digest[..8]);
                (u64::from_le_bytes(word) % n as u64) as usize
            }
        };
        &rule.responses[idx]
    }
}

impl ChatProvider for MockProvider {
    fn complete(
        &self,
        transcript: &[Message],
        params: &GenerationParams,
    ) -> Result<ModelResponse, ProviderError> {
        params.validate()?;
        let first_user = transcript
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let rule = self
            .script
            .rules
            .iter()
            .filter(|r| !r.responses.is_empty())
            .find(|r| {
                r.when_contains
                    .as_deref()
                    .is_none_or(|needle| first_user.contains(needle))
            })
            .ok_or_else(|| ProviderError::Rejected("mock script has no matching rule".into()))?;
        let text = self.pick(rule, transcript).to_string();

        let thinking_tokens = params
            .thinking_budget
            .map(|b| (f64::from(b) * self.script.thinking_fraction).ceil() as u64)
            .unwrap_or(0);
        let output_tokens = token_estimate(&text) + thinking_tokens;
        let (input_tokens, cache_read_tokens, cache_write_tokens) =
            estimate_cache_usage(transcript);
        let latency = self.script.base_latency_s
            + self.script.per_token_latency_s * output_tokens as f64;
        Ok(ModelResponse {
            text,
            usage: TokenUsage {
                input_tokens,
                output_tokens,
                cache_read_tokens,
                cache_write_tokens,
            },
            latency: Duration::from_secs_f64(latency.max(0.0)),
            thinking_text: None,
            usage_estimated: true,
            retries: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> GenerationParams {
        GenerationParams::default()
    }

    #[test]
    fn scripted_answer_is_deterministic() {
        let mock = MockProvider::new(
            MockScript::new(vec![MockRule::by_round(Some("math"), &["<answer>2</answer>"])]),
            7,
        );
        let t = vec![Message::user("What is the answer to the following math problem: 1+1?")];
        let a = mock.complete(&t, &params()).unwrap();
        let b = mock.complete(&t, &params()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.text, "<answer>2</answer>");
        assert_eq!(a.usage.output_tokens, 5);
        assert!(a.usage_estimated);
    }

    #[test]
    fn latency_model() {
        // 400 characters -> 100 output tokens
        let mut script = MockScript::new(vec![MockRule::by_round(None, &[&"x".repeat(400)])]);
        script.base_latency_s = 0.5;
        script.per_token_latency_s = 0.01;
        let r = MockProvider::new(script, 0)
            .complete(&[Message::user("q")], &params())
            .unwrap();
        assert_eq!(r.usage.output_tokens, 100);
        assert!((r.latency.as_secs_f64() - 1.5).abs() < 1e-9);
    }

    #[test]
    fn by_round_follows_assistant_count() {
        let mock = MockProvider::new(
            MockScript::new(vec![MockRule::by_round(None, &["4", "5"])]),
            0,
        );
        let t0 = vec![Message::user("q")];
        let t1 = vec![Message::user("q"), Message::assistant("4"), Message::user("again")];
        let t3 = vec![
            Message::user("q"),
            Message::assistant("4"),
            Message::user("again"),
            Message::assistant("5"),
            Message::user("again"),
        ];
        assert_eq!(mock.complete(&t0, &params()).unwrap().text, "4");
        assert_eq!(mock.complete(&t1, &params()).unwrap().text, "5");
        assert_eq!(mock.complete(&t3, &params()).unwrap().text, "5");
    }

    #[test]
    fn hashed_pick_depends_on_seed_only_through_hash() {
        let choices: Vec<String> = (0..16).map(|i| format!("c{i}")).collect();
        let refs: Vec<&str> = choices.iter().map(String::as_str).collect();
        let script = MockScript::new(vec![MockRule::hashed(None, &refs)]);
        let t = vec![Message::user("question")];
        let a = MockProvider::new(script.clone(), 1).complete(&t, &params()).unwrap();
        let b = MockProvider::new(script.clone(), 1).complete(&t, &params()).unwrap();
        assert_eq!(a, b);
        let distinct: std::collections::HashSet<String> = (0..20)
            .map(|seed| {
                MockProvider::new(script.clone(), seed)
                    .complete(&t, &params())
                    .unwrap()
                    .text
            })
            .collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn no_matching_rule_is_rejected() {
        let mock = MockProvider::new(
            MockScript::new(vec![MockRule::by_round(Some("zzz"), &["x"])]),
            0,
        );
        assert!(matches!(
            mock.complete(&[Message::user("q")], &params()),
            Err(ProviderError::Rejected(_))
        ));
    }

    #[test]
    fn thinking_tokens_are_billed() {
        let mut script = MockScript::new(vec![MockRule::by_round(None, &["abcd"])]);
        script.thinking_fraction = 0.5;
        let p = GenerationParams {
            max_tokens: 5120,
            temperature: None,
            thinking_budget: Some(4096),
        };
        let r = MockProvider::new(script, 0)
            .complete(&[Message::user("q")], &p)
            .unwrap();
        assert_eq!(r.usage.output_tokens, 1 + 2048);
    }

    #[test]
    fn script_parses_from_json() {
        let script: MockScript = serde_json::from_str(
            r#"{"rules":[{"when_contains":"math","responses":["a","b"],"pick":"hash"}]}"#,
        )
        .unwrap();
        assert_eq!(script.rules[0].pick, MockPick::Hash);
        assert_eq!(script.base_latency_s, 0.5);
    }
}
