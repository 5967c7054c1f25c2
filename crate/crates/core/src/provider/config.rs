use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cassette::CassetteError;
use super::{
    ChatProvider, HttpEndpoint, HttpProvider, MockProvider, MockScript, ProviderError,
    RecordingProvider, ReplayProvider, RetryPolicy, RetryingProvider, ThrottleConfig,
    ThrottledProvider,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    #[default]
    Http,
    Mock,
    Replay,
    Record,
}

/// One model's entry in the providers file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderEntry {
    #[serde(default)]
    pub kind: EntryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<HttpEndpoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<MockScript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cassette: Option<PathBuf>,
    /// Key into the pricing file; defaults to the model id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_id: Option<String>,
    #[serde(default)]
    pub throttle: ThrottleConfig,
    #[serde(default)]
    pub retry: RetryPolicy,
}

/// The resolved shape of a provider.
#[derive(Debug, Clone, PartialEq)]
pub enum ProviderKind {
    Http(HttpEndpoint),
    Mock(MockScript),
    Replay(PathBuf),
    Record {
        inner: Box<ProviderKind>,
        cassette: PathBuf,
    },
}

#[derive(Debug, Error)]
pub enum ProviderConfigError {
    #[error("{model}: {message}")]
    Invalid { model: String, message: String },
    #[error(transparent)]
    Cassette(#[from] CassetteError),
    #[error("{model}: {source}")]
    Provider {
        model: String,
        #[source]
        source: ProviderError,
    },
}

/// Mapping from model id to provider entry.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProvidersConfig {
    pub models: BTreeMap<String, ProviderEntry>,
}

impl ProvidersConfig {
    pub fn price_id<'a>(&'a self, model_id: &'a str) -> &'a str {
        self.models
            .get(model_id)
            .and_then(|e| e.price_id.as_deref())
            .unwrap_or(model_id)
    }
}

impl ProviderEntry {
    pub fn mock(script: MockScript) -> Self {
        Self {
            kind: EntryKind::Mock,
            endpoint: None,
            script: Some(script),
            cassette: None,
            price_id: None,
            throttle: ThrottleConfig::default(),
            retry: RetryPolicy::default(),
        }
    }

    /// Resolves the entry, with relative cassette paths taken from `base_dir`.
    pub fn resolve(&self, model: &str, base_dir: &Path) -> Result<ProviderKind, ProviderConfigError> {
        let invalid = |message: &str| ProviderConfigError::Invalid {
            model: model.to_string(),
            message: message.to_string(),
        };
        let cassette = || {
            self.cassette
                .as_ref()
                .map(|p| base_dir.join(p))
                .ok_or_else(|| invalid("`cassette` is required"))
        };
        let inner = || match (&self.endpoint, &self.script) {
            (Some(e), None) => Ok(ProviderKind::Http(e.clone())),
            (None, Some(s)) => Ok(ProviderKind::Mock(s.clone())),
            _ => Err(invalid("exactly one of `endpoint` or `script` is required")),
        };
        match self.kind {
            EntryKind::Http => match (&self.endpoint, &self.script, &self.cassette) {
                (Some(e), None, None) => Ok(ProviderKind::Http(e.clone())),
                _ => Err(invalid("http providers take only `endpoint`")),
            },
            EntryKind::Mock => match (&self.endpoint, &self.script, &self.cassette) {
                (None, Some(s), None) => Ok(ProviderKind::Mock(s.clone())),
                _ => Err(invalid("mock providers take only `script`")),
            },
            EntryKind::Replay => {
                if self.endpoint.is_some() || self.script.is_some() {
                    return Err(invalid("replay providers take only `cassette`"));
                }
                let path = cassette()?;
                if !path.is_file() {
                    return Err(invalid(&format!(
                        "cassette {} does not exist",
                        path.display()
                    )));
                }
                Ok(ProviderKind::Replay(path))
            }
            EntryKind::Record => Ok(ProviderKind::Record {
                inner: Box::new(inner()?),
                cassette: cassette()?,
            }),
        }
    }
}

fn instantiate(
    model: &str,
    kind: &ProviderKind,
    entry: &ProviderEntry,
    seed: u64,
) -> Result<Arc<dyn ChatProvider>, ProviderConfigError> {
    Ok(match kind {
        ProviderKind::Http(endpoint) => {
            let http = HttpProvider::new(model, endpoint.clone()).map_err(|source| {
                ProviderConfigError::Provider {
                    model: model.to_string(),
                    source,
                }
            })?;
            Arc::new(RetryingProvider::new(http, entry.retry.clone(), seed))
        }
        ProviderKind::Mock(script) => Arc::new(MockProvider::new(script.clone(), seed)),
        ProviderKind::Replay(path) => Arc::new(ReplayProvider::open(path)?),
        ProviderKind::Record { inner, cassette } => {
            let inner = instantiate(model, inner, entry, seed)?;
            Arc::new(RecordingProvider::create(inner, cassette)?)
        }
    })
}

/// Builds a throttled provider for one model.
pub fn build_provider(
    model: &str,
    entry: &ProviderEntry,
    base_dir: &Path,
    seed: u64,
) -> Result<Arc<dyn ChatProvider>, ProviderConfigError> {
    let kind = entry.resolve(model, base_dir)?;
    let provider = instantiate(model, &kind, entry, seed)?;
    Ok(Arc::new(ThrottledProvider::new(provider, entry.throttle.clone())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Message;
    use crate::provider::{GenerationParams, MockRule};

    #[test]
    fn parses_mapping() {
        let cfg: ProvidersConfig = serde_json::from_str(
            r#"{
                "claude": {"endpoint": {"url": "http://localhost:1/v1", "auth_env": "KEY"}, "price_id": "claude-2025"},
                "fake": {"kind": "mock", "script": {"rules": [{"responses": ["x"]}]}}
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.price_id("claude"), "claude-2025");
        assert_eq!(cfg.price_id("fake"), "fake");
        assert_eq!(cfg.models["fake"].throttle.max_in_flight, 4);
        assert_eq!(cfg.models["claude"].retry.max_retries, 5);
    }

    #[test]
    fn replay_requires_existing_cassette() {
        let entry = ProviderEntry {
            kind: EntryKind::Replay,
            cassette: Some("missing.jsonl".into()),
            ..ProviderEntry::mock(MockScript::new(vec![]))
        };
        let entry = ProviderEntry { script: None, ..entry };
        assert!(matches!(
            entry.resolve("m", Path::new("/nonexistent")),
            Err(ProviderConfigError::Invalid { .. })
        ));
    }

    #[test]
    fn record_wraps_mock_and_replays() {
        let dir = tempfile::tempdir().unwrap();
        let script = MockScript::new(vec![MockRule::by_round(None, &["hello"])]);
        let record = ProviderEntry {
            kind: EntryKind::Record,
            cassette: Some("tape.jsonl".into()),
            ..ProviderEntry::mock(script)
        };
        let p = build_provider("m", &record, dir.path(), 0).unwrap();
        let t = [Message::user("q")];
        let live = p.complete(&t, &GenerationParams::default()).unwrap();
        drop(p);
        let replay = ProviderEntry {
            kind: EntryKind::Replay,
            script: None,
            cassette: Some("tape.jsonl".into()),
            ..record
        };
        let p = build_provider("m", &replay, dir.path(), 0).unwrap();
        assert_eq!(p.complete(&t, &GenerationParams::default()).unwrap().text, live.text);
    }

    #[test]
    fn mixed_fields_are_rejected() {
        let mut entry = ProviderEntry::mock(MockScript::new(vec![]));
        entry.endpoint = Some(HttpEndpoint::new("http://x"));
        assert!(entry.resolve("m", Path::new(".")).is_err());
    }
}
