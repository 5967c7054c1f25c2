use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{
    token_estimate, transcript_estimate, ChatProvider, GenerationParams, ModelResponse,
    ProviderError,
};
use crate::model::{Message, Role, TokenUsage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMarker {
    pub field: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsagePointers {
    #[serde(default)]
    pub input: Option<String>,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub cache_read: Option<String>,
    #[serde(default)]
    pub cache_write: Option<String>,
}

/// Maps the neutral request/response shape onto one vendor's field names.
/// Pointers use JSON-pointer syntax (`/choices/0/message/content`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldAdapter {
    pub model_field: String,
    pub messages_field: String,
    pub max_tokens_field: String,
    pub temperature_field: String,
    /// Where the thinking budget goes. Without it, budgeted requests are rejected.
    pub thinking_budget_pointer: Option<String>,
    /// Hoists a leading system message into this top-level field.
    pub system_field: Option<String>,
    pub cache_checkpoint: Option<CheckpointMarker>,
    /// Constant fields merged into every request body.
    pub extra: Option<Map<String, Value>>,
    pub text_pointer: String,
    pub thinking_pointer: Option<String>,
    pub usage: UsagePointers,
}

impl Default for FieldAdapter {
    fn default() -> Self {
        Self {
            model_field: "model".into(),
            messages_field: "messages".into(),
            max_tokens_field: "max_tokens".into(),
            temperature_field: "temperature".into(),
            thinking_budget_pointer: None,
            system_field: None,
            cache_checkpoint: None,
            extra: None,
            text_pointer: "/choices/0/message/content".into(),
            thinking_pointer: None,
            usage: UsagePointers {
                input: Some("/usage/prompt_tokens".into()),
                output: Some("/usage/completion_tokens".into()),
                cache_read: None,
                cache_write: None,
            },
        }
    }
}

fn set_pointer(root: &mut Value, pointer: &str, value: Value) -> Result<(), ProviderError> {
    let parts: Vec<&str> = pointer.trim_start_matches('/').split('/').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ProviderError::Rejected(format!("bad field pointer {pointer:?}")));
    }
    let mut cursor = root;
    for (i, part) in parts.iter().enumerate() {
        let obj = cursor
            .as_object_mut()
            .ok_or_else(|| ProviderError::Rejected(format!("pointer {pointer:?} crosses a non-object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cursor = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

impl FieldAdapter {
    /// Builds the request body for one call.
    pub fn build_request(
        &self,
        model: &str,
        transcript: &[Message],
        params: &GenerationParams,
    ) -> Result<Value, ProviderError> {
        let mut body = Value::Object(self.extra.clone().unwrap_or_default());
        set_pointer(&mut body, &self.model_field, Value::from(model))?;

        let mut messages = transcript;
        if let (Some(field), Some(first)) = (&self.system_field, transcript.first()) {
            if first.role == Role::System {
                set_pointer(&mut body, field, Value::from(first.content.clone()))?;
                messages = &transcript[1..];
            }
        }
        let encoded: Vec<Value> = messages
            .iter()
            .map(|m| {
                let mut obj = Map::new();
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                obj.insert("role".into(), Value::from(role));
                obj.insert("content".into(), Value::from(m.content.clone()));
                if let (true, Some(marker)) = (m.cache_checkpoint, &self.cache_checkpoint) {
                    obj.insert(marker.field.clone(), marker.value.clone());
                }
                Value::Object(obj)
            })
            .collect();
        set_pointer(&mut body, &self.messages_field, Value::Array(encoded))?;
        set_pointer(&mut body, &self.max_tokens_field, Value::from(params.max_tokens))?;
        if let Some(t) = params.temperature {
            set_pointer(&mut body, &self.temperature_field, Value::from(t))?;
        }
        if let Some(budget) = params.thinking_budget {
            let pointer = self.thinking_budget_pointer.as_deref().ok_or_else(|| {
                ProviderError::Rejected(
                    "thinking budget requested but the provider adapter has no budget field".into(),
                )
            })?;
            set_pointer(&mut body, pointer, Value::from(budget))?;
        }
        Ok(body)
    }

    /// Extracts text, optional thinking text and optional usage from a response body.
    pub fn decode_response(
        &self,
        body: &[u8],
    ) -> Result<(String, Option<String>, Option<TokenUsage>), ProviderError> {
        let value: Value = serde_json::from_slice(body)
            .map_err(|e| ProviderError::Rejected(format!("response is not JSON: {e}")))?;
        let text = value
            .pointer(&self.text_pointer)
            .and_then(flatten_text)
            .ok_or_else(|| {
                ProviderError::Rejected(format!("response has no text at {}", self.text_pointer))
            })?;
        let thinking = self
            .thinking_pointer
            .as_deref()
            .and_then(|p| value.pointer(p))
            .and_then(flatten_text);
        let read = |p: &Option<String>| p.as_deref().and_then(|p| value.pointer(p)).and_then(Value::as_u64);
        let usage = match (read(&self.usage.input), read(&self.usage.output)) {
            (Some(input_tokens), Some(output_tokens)) => Some(TokenUsage {
                input_tokens,
                output_tokens,
                cache_read_tokens: read(&self.usage.cache_read).unwrap_or(0),
                cache_write_tokens: read(&self.usage.cache_write).unwrap_or(0),
            }),
            _ => None,
        };
        Ok((text, thinking, usage))
    }
}

/// Strings pass through; arrays of content blocks have their `text` fields joined,
/// skipping blocks typed `thinking`.
fn flatten_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Array(blocks) => {
            let parts: Vec<&str> = blocks
                .iter()
                .filter(|b| b.get("type").and_then(Value::as_str) != Some("thinking"))
                .filter_map(|b| b.get("text").and_then(Value::as_str))
                .collect();
            (!parts.is_empty()).then(|| parts.concat())
        }
        Value::Object(block) => block
            .get("text")
            .or_else(|| block.get("thinking"))
            .and_then(Value::as_str)
            .map(str::to_string),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpEndpoint {
    pub url: String,
    /// Remote model name; defaults to the configured model id.
    #[serde(default)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "HttpEndpoint::default_auth_header")]
    pub auth_header: String,
    #[serde(default = "HttpEndpoint::default_auth_prefix")]
    pub auth_prefix: String,
    #[serde(default)]
    pub headers: Vec<(String, String)>,
    #[serde(default = "HttpEndpoint::default_timeout", with = "crate::secs")]
    pub timeout: Duration,
    #[serde(default)]
    pub adapter: FieldAdapter,
}

impl HttpEndpoint {
    fn default_auth_header() -> String {
        "Authorization".into()
    }

    fn default_auth_prefix() -> String {
        "Bearer ".into()
    }

    fn default_timeout() -> Duration {
        Duration::from_secs(300)
    }

    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: None,
            auth_env: None,
            auth_header: Self::default_auth_header(),
            auth_prefix: Self::default_auth_prefix(),
            headers: Vec::new(),
            timeout: Self::default_timeout(),
            adapter: FieldAdapter::default(),
        }
    }
}

pub struct HttpProvider {
    model: String,
    endpoint: HttpEndpoint,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    /// Reads the API key from the configured environment variable, if any.
    pub fn new(model_id: &str, endpoint: HttpEndpoint) -> Result<Self, ProviderError> {
        let api_key = match &endpoint.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ProviderError::Rejected(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(Self {
            model: endpoint.model.clone().unwrap_or_else(|| model_id.to_string()),
            endpoint,
            api_key,
            client,
        })
    }
}

fn retry_after(headers: &reqwest::header::HeaderMap) -> Option<Duration> {
    headers
        .get(reqwest::header::RETRY_AFTER)?
        .to_str()
        .ok()?
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|s| s.is_finite() && *s >= 0.0)
        .map(Duration::from_secs_f64)
}

impl ChatProvider for HttpProvider {
    fn complete(
        &self,
        transcript: &[Message],
        params: &GenerationParams,
    ) -> Result<ModelResponse, ProviderError> {
        params.validate()?;
        let body = self
            .endpoint
            .adapter
            .build_request(&self.model, transcript, params)?;
        let mut request = self.client.post(&self.endpoint.url).json(&body);
        if let Some(key) = &self.api_key {
            request = request.header(
                self.endpoint.auth_header.as_str(),
                format!("{}{}", self.endpoint.auth_prefix, key),
            );
        }
        for (name, value) in &self.endpoint.headers {
            request = request.header(name.as_str(), value.as_str());
        }

        let started = Instant::now();
        let response = request
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = response.status();
        let hint = retry_after(response.headers());
        let bytes = response
            .bytes()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let latency = started.elapsed();

        if status.as_u16() == 429 {
            return Err(ProviderError::RateLimited { retry_after: hint });
        }
        if status.is_server_error() || status.as_u16() == 408 {
            return Err(ProviderError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let snippet: String = String::from_utf8_lossy(&bytes).chars().take(300).collect();
            return Err(ProviderError::Rejected(format!("HTTP {status}: {snippet}")));
        }

        let (text, thinking_text, usage) = self.endpoint.adapter.decode_response(&bytes)?;
        let (usage, usage_estimated) = match usage {
            Some(u) => (u, false),
            None => (
                TokenUsage::new(transcript_estimate(transcript), token_estimate(&text)),
                true,
            ),
        };
        Ok(ModelResponse {
            text,
            usage,
            latency,
            thinking_text,
            usage_estimated,
            retries: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn params(budget: Option<u32>) -> GenerationParams {
        GenerationParams {
            max_tokens: 5120,
            temperature: None,
            thinking_budget: budget,
        }
    }

    #[test]
    fn default_adapter_builds_messages_body() {
        let t = vec![Message::user("hi")];
        let body = FieldAdapter::default()
            .build_request("m", &t, &params(None))
            .unwrap();
        assert_eq!(
            body,
            json!({"model": "m", "messages": [{"role": "user", "content": "hi"}], "max_tokens": 5120})
        );
    }

    #[test]
    fn budget_without_field_is_rejected() {
        let err = FieldAdapter::default()
            .build_request("m", &[Message::user("hi")], &params(Some(1024)))
            .unwrap_err();
        assert!(matches!(err, ProviderError::Rejected(_)));
    }

    #[test]
    fn budget_system_and_checkpoint_mapping() {
        let adapter = FieldAdapter {
            thinking_budget_pointer: Some("/thinking/budget_tokens".into()),
            system_field: Some("system".into()),
            cache_checkpoint: Some(CheckpointMarker {
                field: "cache_control".into(),
                value: json!({"type": "ephemeral"}),
            }),
            extra: Some(json!({"thinking": {"type": "enabled"}}).as_object().unwrap().clone()),
            ..FieldAdapter::default()
        };
        let t = vec![
            Message::system("be brief"),
            Message::user("hi").with_checkpoint(true),
        ];
        let body = adapter.build_request("m", &t, &params(Some(1024))).unwrap();
        assert_eq!(body["thinking"], json!({"type": "enabled", "budget_tokens": 1024}));
        assert_eq!(body["system"], "be brief");
        assert_eq!(
            body["messages"],
            json!([{"role": "user", "content": "hi", "cache_control": {"type": "ephemeral"}}])
        );
    }

    #[test]
    fn decode_openai_style() {
        let body = br#"{"choices":[{"message":{"content":"<answer>2</answer>"}}],"usage":{"prompt_tokens":12,"completion_tokens":5}}"#;
        let (text, thinking, usage) = FieldAdapter::default().decode_response(body).unwrap();
        assert_eq!(text, "<answer>2</answer>");
        assert_eq!(thinking, None);
        assert_eq!(usage, Some(TokenUsage::new(12, 5)));
    }

    #[test]
    fn decode_content_blocks() {
        let adapter = FieldAdapter {
            text_pointer: "/content".into(),
            thinking_pointer: Some("/content/0".into()),
            usage: UsagePointers {
                input: Some("/usage/input_tokens".into()),
                output: Some("/usage/output_tokens".into()),
                cache_read: Some("/usage/cache_read_input_tokens".into()),
                cache_write: None,
            },
            ..FieldAdapter::default()
        };
        let body = br#"{"content":[{"type":"thinking","thinking":"hmm"},{"type":"text","text":"done"}],"usage":{"input_tokens":3,"output_tokens":4,"cache_read_input_tokens":9}}"#;
        let (text, thinking, usage) = adapter.decode_response(body).unwrap();
        assert_eq!(text, "done");
        assert_eq!(thinking.as_deref(), Some("hmm"));
        assert_eq!(usage.unwrap().cache_read_tokens, 9);
    }

    #[test]
    fn decode_failures() {
        let a = FieldAdapter::default();
        assert!(a.decode_response(b"not json").is_err());
        assert!(a.decode_response(b"{}").is_err());
        let (_, _, usage) = a
            .decode_response(br#"{"choices":[{"message":{"content":"x"}}]}"#)
            .unwrap();
        assert!(usage.is_none());
    }
}
