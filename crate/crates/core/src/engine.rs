//! Runs one sample under one strategy and records every round.

use std::io::{BufRead, Write};
use std::time::Duration;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback::{judge_feedback, sql_execution_feedback, FeedbackResult};
use crate::model::{FeedbackKind, Message, Sample, StrategyConfig, TaskInput, TaskKind, TokenUsage};
use crate::prompts::TemplateSet;
use crate::provider::{ChatProvider, GenerationParams, ModelResponse};
use crate::verifier::{extract_tagged, DatasetError, VerdictRecord, Verifier};

pub const TRACE_VERSION: u32 = 1;

/// Tokens reserved for the visible answer on top of a thinking budget.
pub const DEFAULT_ANSWER_HEADROOM: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSnapshot {
    pub round_index: u32,
    /// User message sent this round (initial prompt or reflection prompt).
    pub prompt: Message,
    pub response: ModelResponse,
    /// Feedback computed before this round; absent at round 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<VerdictRecord>,
}

impl RoundSnapshot {
    pub fn feedback_text(&self) -> Option<&str> {
        self.feedback.as_ref().map(|f| f.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    /// Round whose call (or feedback) failed.
    pub round: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub trace_version: u32,
    pub sample_id: String,
    pub task: TaskKind,
    pub strategy: StrategyConfig,
    pub strategy_label: String,
    pub snapshots: Vec<RoundSnapshot>,
    #[serde(rename = "total_latency_s", with = "crate::secs")]
    pub total_latency: Duration,
    /// Everything billed for this sample, judge calls included.
    pub total_usage: TokenUsage,
    /// The judge's share of `total_usage`.
    #[serde(default)]
    pub judge_usage: TokenUsage,
    pub estimated_usage: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<Truncation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_usd: Option<Decimal>,
}

impl SampleTrace {
    pub fn final_snapshot(&self) -> Option<&RoundSnapshot> {
        self.snapshots.last()
    }

    pub fn final_answer(&self) -> Option<&str> {
        self.final_snapshot().map(|s| s.response.text.as_str())
    }

    /// Conversation as sent at the last call, followed by the last answer.
    pub fn transcript(&self) -> Vec<Message> {
        let mut out = Vec::new();
        for s in &self.snapshots {
            out.push(s.prompt.clone());
            out.push(Message::assistant(s.response.text.clone()).with_checkpoint(s.prompt.cache_checkpoint));
        }
        out
    }

    /// Usage of the strategy's own model, without judge calls.
    pub fn model_usage(&self) -> TokenUsage {
        self.snapshots.iter().map(|s| s.response.usage).sum()
    }

    /// Per-round pass flags; `None` if any round is unscored.
    pub fn pass_flags(&self) -> Option<Vec<bool>> {
        self.snapshots
            .iter()
            .map(|s| s.verdict.as_ref().map(|v| v.pass))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.truncation.is_none() && self.snapshots.len() == self.strategy.reflection_rounds as usize + 1
    }

    pub fn key(&self) -> (String, String) {
        (self.sample_id.clone(), self.strategy_label.clone())
    }
}

/// Raises `max_tokens` so that a thinking budget leaves room for the answer.
pub fn apply_budget(strategy: &StrategyConfig, base: &GenerationParams) -> GenerationParams {
    apply_budget_with_headroom(strategy, base, DEFAULT_ANSWER_HEADROOM)
}

pub fn apply_budget_with_headroom(
    strategy: &StrategyConfig,
    base: &GenerationParams,
    headroom: u32,
) -> GenerationParams {
    let mut params = base.clone();
    if let Some(budget) = strategy.thinking_budget {
        params.thinking_budget = Some(budget);
        params.max_tokens = params.max_tokens.max(budget.saturating_add(headroom));
    }
    params
}

#[derive(Debug, Clone)]
pub struct Engine {
    pub templates: TemplateSet,
    pub base_params: GenerationParams,
    pub judge_params: GenerationParams,
    pub answer_headroom: u32,
}

impl Default for Engine {
    fn default() -> Self {
        Self {
            templates: TemplateSet::default(),
            base_params: GenerationParams::default(),
            judge_params: GenerationParams::default(),
            answer_headroom: DEFAULT_ANSWER_HEADROOM,
        }
    }
}

impl Engine {
    /// Initial call plus `reflection_rounds` reflection calls. Failures end the
    /// trace early with the reason recorded.
    pub fn run_sample(
        &self,
        sample: &Sample,
        strategy: &StrategyConfig,
        provider: &dyn ChatProvider,
        judge: Option<&dyn ChatProvider>,
    ) -> SampleTrace {
        let mut trace = SampleTrace {
            trace_version: TRACE_VERSION,
            sample_id: sample.id.clone(),
            task: sample.task(),
            strategy: strategy.clone(),
            strategy_label: strategy.label(),
            snapshots: Vec::new(),
            total_latency: Duration::ZERO,
            total_usage: TokenUsage::default(),
            judge_usage: TokenUsage::default(),
            estimated_usage: false,
            truncation: None,
            cost_usd: None,
        };
        if let Err(reason) = self.run_rounds(sample, strategy, provider, judge, &mut trace) {
            trace.truncation = Some(Truncation {
                round: trace.snapshots.len() as u32,
                reason,
            });
        }
        trace
    }

    fn run_rounds(
        &self,
        sample: &Sample,
        strategy: &StrategyConfig,
        provider: &dyn ChatProvider,
        judge: Option<&dyn ChatProvider>,
        trace: &mut SampleTrace,
    ) -> Result<(), String> {
        let params = apply_budget_with_headroom(strategy, &self.base_params, self.answer_headroom);
        let checkpoint = strategy.caching_enabled;
        let first = self
            .templates
            .initial_prompt(sample)
            .map_err(|e| e.to_string())?
            .with_checkpoint(checkpoint);
        let question = first.content.clone();
        let mut transcript = vec![first.clone()];
        let response = provider.complete(&transcript, &params).map_err(|e| e.to_string())?;
        record(trace, first, response, None);

        for round in 1..=strategy.reflection_rounds {
            let latest = trace.snapshots.last().map(|s| s.response.text.clone()).unwrap_or_default();
            transcript.push(Message::assistant(latest.clone()).with_checkpoint(checkpoint));
            let feedback = match strategy.feedback {
                FeedbackKind::None => None,
                FeedbackKind::LlmJudge => {
                    let judge = judge.ok_or("llm_judge feedback without a judge provider")?;
                    let fb = judge_feedback(&self.templates, &question, &latest, judge, &self.judge_params)
                        .map_err(|e| format!("judge: {e}"))?;
                    Some(fb)
                }
                FeedbackKind::SqlExecution => {
                    let TaskInput::TextToSql { db_path, .. } = &sample.input else {
                        return Err("sql_execution feedback on a non-SQL sample".into());
                    };
                    let candidate = extract_tagged(&latest, "SQL").unwrap_or_else(|_| latest.clone());
                    Some(sql_execution_feedback(&candidate, db_path))
                }
            };
            if let Some(fb) = &feedback {
                trace.total_latency += fb.latency;
                trace.total_usage += fb.usage;
                if fb.mechanism == FeedbackKind::LlmJudge {
                    trace.judge_usage += fb.usage;
                }
                trace.estimated_usage |= fb.usage_estimated;
            }
            let prompt = self
                .templates
                .reflection_prompt(&question, feedback.as_ref().map(|f| f.text.as_str()));
            transcript.push(prompt.clone());
            let response = provider.complete(&transcript, &params).map_err(|e| {
                format!("round {round}: {e}")
            })?;
            record(trace, prompt, response, feedback);
        }
        Ok(())
    }

    /// Fills in the verdict of every round.
    pub fn evaluate(
        &self,
        verifier: &Verifier,
        sample: &Sample,
        trace: &mut SampleTrace,
    ) -> Result<(), DatasetError> {
        for snap in &mut trace.snapshots {
            snap.verdict = Some(verifier.score(sample, &snap.response.text)?);
        }
        Ok(())
    }
}

fn record(trace: &mut SampleTrace, prompt: Message, response: ModelResponse, feedback: Option<FeedbackResult>) {
    trace.total_latency += response.latency;
    trace.total_usage += response.usage;
    trace.estimated_usage |= response.usage_estimated;
    trace.snapshots.push(RoundSnapshot {
        round_index: trace.snapshots.len() as u32,
        prompt,
        response,
        feedback,
        verdict: None,
    });
}

/// First line of every trace file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub trace_version: u32,
    pub created_at: String,
}

impl TraceHeader {
    pub fn now() -> Self {
        Self {
            trace_version: TRACE_VERSION,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: unsupported trace_version {found}")]
    Version { line: usize, found: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One JSON line, no trailing newline.
pub fn trace_to_line(trace: &SampleTrace) -> String {
    serde_json::to_string(trace).expect("trace serialization is infallible")
}

pub fn parse_trace_line(line: &str, line_no: usize) -> Result<SampleTrace, TraceError> {
    let trace: SampleTrace =
        serde_json::from_str(line).map_err(|source| TraceError::Parse { line: line_no, source })?;
    if trace.trace_version != TRACE_VERSION {
        return Err(TraceError::Version {
            line: line_no,
            found: trace.trace_version,
        });
    }
    Ok(trace)
}

/// Reads a trace file, skipping the header and blank lines. A trailing partial
/// line (from an interrupted write) is ignored when `tolerate_partial_tail` is set.
pub fn read_traces(reader: impl BufRead, tolerate_partial_tail: bool) -> Result<Vec<SampleTrace>, TraceError> {
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    for (i, line) in lines.iter().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('{')
            && !line.contains("\"sample_id\"")
            && line.contains("\"created_at\"")
            && serde_json::from_str::<TraceHeader>(line).is_ok()
        {
            continue;
        }
        match parse_trace_line(line, i + 1) {
            Ok(t) => out.push(t),
            Err(TraceError::Parse { .. }) if tolerate_partial_tail && Some(i) == last => {
                log::warn!("ignoring incomplete final trace line {}", i + 1);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn write_header(mut w: impl Write, header: &TraceHeader) -> std::io::Result<()> {
    writeln!(w, "{}", serde_json::to_string(header).expect("header serializes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{MockProvider, MockRule, MockScript, ProviderError};

    fn math_sample() -> Sample {
        Sample {
            id: "m1".into(),
            input: TaskInput::MathReasoning { problem: "2+2".into() },
            gold: "5".into(),
        }
    }

    fn scripted(responses: &[&str]) -> MockProvider {
        MockProvider::new(MockScript::new(vec![MockRule::by_round(None, responses)]), 7)
    }

    #[test]
    fn zero_rounds_single_snapshot() {
        let t = Engine::default().run_sample(&math_sample(), &StrategyConfig::new("m", 0), &scripted(&["<answer>4</answer>"]), None);
        assert_eq!(t.snapshots.len(), 1);
        assert!(t.snapshots.iter().all(|s| s.feedback.is_none()));
        assert!(t.is_complete());
    }

    #[test]
    fn reflection_changes_answer() {
        let p = scripted(&["<answer>4</answer>", "<answer>5</answer>"]);
        let mut t = Engine::default().run_sample(&math_sample(), &StrategyConfig::new("m", 1), &p, None);
        assert_eq!(t.snapshots[0].response.text, "<answer>4</answer>");
        assert_eq!(t.final_answer(), Some("<answer>5</answer>"));
        Engine::default().evaluate(&Verifier::default(), &math_sample(), &mut t).unwrap();
        assert_eq!(t.pass_flags(), Some(vec![false, true]));
    }

    #[test]
    fn three_rounds_message_counts() {
        struct Spy(std::sync::Mutex<Vec<Vec<Message>>>);
        impl ChatProvider for Spy {
            fn complete(&self, t: &[Message], _: &GenerationParams) -> Result<ModelResponse, ProviderError> {
                self.0.lock().unwrap().push(t.to_vec());
                Ok(ModelResponse {
                    text: "ok".into(),
                    usage: TokenUsage::new(1, 1),
                    latency: Duration::from_secs(1),
                    thinking_text: None,
                    usage_estimated: false,
                    retries: 0,
                })
            }
        }
        let spy = Spy(Default::default());
        let t = Engine::default().run_sample(&math_sample(), &StrategyConfig::new("m", 3), &spy, None);
        assert_eq!(t.snapshots.len(), 4);
        let calls = spy.0.into_inner().unwrap();
        let last = calls.last().unwrap();
        let users = last.iter().filter(|m| m.role == crate::model::Role::User).count();
        assert_eq!((users, last.len() - users), (4, 3));
        for w in calls.windows(2) {
            assert!(w[0].len() < w[1].len() && w[1].starts_with(&w[0]));
        }
        assert_eq!(t.total_latency, Duration::from_secs(4));
        assert_eq!(t.total_usage, TokenUsage::new(4, 4));
    }

    #[test]
    fn provider_error_truncates() {
        struct FailSecond(std::sync::atomic::AtomicU32);
        impl ChatProvider for FailSecond {
            fn complete(&self, _: &[Message], _: &GenerationParams) -> Result<ModelResponse, ProviderError> {
                if self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 0 {
                    Ok(ModelResponse {
                        text: "first".into(),
                        usage: TokenUsage::default(),
                        latency: Duration::ZERO,
                        thinking_text: None,
                        usage_estimated: false,
                        retries: 0,
                    })
                } else {
                    Err(ProviderError::Rejected("boom".into()))
                }
            }
        }
        let t = Engine::default().run_sample(&math_sample(), &StrategyConfig::new("m", 3), &FailSecond(0.into()), None);
        assert_eq!(t.snapshots.len(), 1);
        let tr = t.truncation.unwrap();
        assert_eq!(tr.round, 1);
        assert!(tr.reason.contains("boom"));
    }

    #[test]
    fn judge_calls_are_counted() {
        let mut s = StrategyConfig::new("m", 2);
        s.feedback = FeedbackKind::LlmJudge;
        s.judge_model_id = Some("j".into());
        let judge = scripted(&["INCORRECT - try again"]);
        let t = Engine::default().run_sample(&math_sample(), &s, &scripted(&["<answer>4</answer>"]), Some(&judge));
        assert_eq!(t.snapshots.len(), 3);
        assert_eq!(t.snapshots[1].feedback_text(), Some("INCORRECT - try again"));
        assert!(t.snapshots[2].prompt.content.contains("INCORRECT - try again"));
        assert!(!t.judge_usage.is_zero());
        assert_eq!(t.total_usage, t.model_usage() + t.judge_usage);
    }

    #[test]
    fn budget_headroom() {
        let mut s = StrategyConfig::new("m", 0);
        let base = GenerationParams { max_tokens: 2048, ..Default::default() };
        assert_eq!(apply_budget(&s, &base), base);
        s.thinking_budget = Some(4096);
        let p = apply_budget(&s, &base);
        assert_eq!((p.max_tokens, p.thinking_budget), (5120, Some(4096)));
        s.thinking_budget = Some(1024);
        let p = apply_budget(&s, &GenerationParams { max_tokens: 8192, ..Default::default() });
        assert_eq!((p.max_tokens, p.thinking_budget), (8192, Some(1024)));
    }

    #[test]
    fn trace_round_trip() {
        let t = Engine::default().run_sample(&math_sample(), &StrategyConfig::new("m", 1), &scripted(&["a", "b"]), None);
        let line = trace_to_line(&t);
        let mut file = Vec::new();
        write_header(&mut file, &TraceHeader::now()).unwrap();
        file.extend_from_slice(line.as_bytes());
        file.extend_from_slice(b"\n{\"trace_version\":1,\"sample_");
        let back = read_traces(&file[..], true).unwrap();
        assert_eq!(back, vec![t]);
        assert!(read_traces(&file[..], false).is_err());
    }
}
