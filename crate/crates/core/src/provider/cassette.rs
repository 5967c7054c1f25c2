use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{ChatProvider, GenerationParams, ModelResponse, ProviderError};
use crate::model::{Message, TokenUsage};

/// One recorded exchange; cassette files hold one JSON record per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteRecord {
    pub request_hash: String,
    pub transcript: Vec<Message>,
    pub params: GenerationParams,
    pub response_text: String,
    pub usage: TokenUsage,
    pub latency_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thinking_text: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub usage_estimated: bool,
}

impl CassetteRecord {
    pub fn parse_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }

    fn to_response(&self) -> ModelResponse {
        ModelResponse {
            text: self.response_text.clone(),
            usage: self.usage,
            latency: Duration::from_secs_f64(self.latency_s.max(0.0)),
            thinking_text: self.thinking_text.clone(),
            usage_estimated: self.usage_estimated,
            retries: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum CassetteError {
    #[error("cassette {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cassette {path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// SHA-256 over the canonical JSON encoding of the transcript and parameters.
pub fn request_hash(transcript: &[Message], params: &GenerationParams) -> String {
    let encoded = serde_json::to_vec(&(transcript, params)).expect("request is serializable");
    hex::encode(Sha256::digest(encoded))
}

/// Serves responses from a cassette. Repeated identical requests are answered in
/// recording order; once exhausted the last recording is repeated.
#[derive(Debug)]
pub struct ReplayProvider {
    records: HashMap<String, Vec<CassetteRecord>>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl ReplayProvider {
    pub fn open(path: &Path) -> Result<Self, CassetteError> {
        let io_err = |source| CassetteError::Io {
            path: path.to_path_buf(),
            source,
        };
        let reader = BufReader::new(File::open(path).map_err(io_err)?);
        let mut records: HashMap<String, Vec<CassetteRecord>> = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let record = CassetteRecord::parse_line(&line).map_err(|source| CassetteError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                source,
            })?;
            records
                .entry(record.request_hash.clone())
                .or_default()
                .push(record);
        }
        Ok(Self::from_records(records))
    }

    fn from_records(records: HashMap<String, Vec<CassetteRecord>>) -> Self {
        Self {
            records,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.records.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl ChatProvider for ReplayProvider {
    fn complete(
        &self,
        transcript: &[Message],
        params: &GenerationParams,
    ) -> Result<ModelResponse, ProviderError> {
        let hash = request_hash(transcript, params);
        let recorded = self
            .records
            .get(&hash)
            .ok_or_else(|| ProviderError::CassetteMiss(hash.clone()))?;
        let mut cursors = self.cursors.lock().expect("cursor lock poisoned");
        let cursor = cursors.entry(hash).or_insert(0);
        let record = &recorded[(*cursor).min(recorded.len() - 1)];
        *cursor += 1;
        Ok(record.to_response())
    }
}

/// Forwards to an inner provider and appends every successful exchange to a
/// cassette file.
pub struct RecordingProvider<P> {
    inner: P,
    path: PathBuf,
    writer: Mutex<BufWriter<File>>,
}

impl<P: ChatProvider> RecordingProvider<P> {
    pub fn create(inner: P, path: &Path) -> Result<Self, CassetteError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| CassetteError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(Self {
            inner,
            path: path.to_path_buf(),
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    fn complete(
        &self,
        transcript: &[Message],
        params: &GenerationParams,
    ) -> Result<ModelResponse, ProviderError> {
        let response = self.inner.complete(transcript, params)?;
        let record = CassetteRecord {
            request_hash: request_hash(transcript, params),
            transcript: transcript.to_vec(),
            params: params.clone(),
            response_text: response.text.clone(),
            usage: response.usage,
            latency_s: response.latency.as_secs_f64(),
            thinking_text: response.thinking_text.clone(),
            usage_estimated: response.usage_estimated,
        };
        let line = serde_json::to_string(&record).expect("record is serializable");
        let mut writer = self.writer.lock().expect("cassette writer poisoned");
        writeln!(writer, "{line}")
            .and_then(|_| writer.flush())
            .map_err(|e| ProviderError::Transport(format!("cassette write failed: {e}")))?;
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{MockProvider, MockRule, MockScript};

    fn mock() -> MockProvider {
        MockProvider::new(
            MockScript::new(vec![MockRule::hashed(None, &["alpha", "beta", "gamma delta"])]),
            3,
        )
    }

    #[test]
    fn record_then_replay_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tape.jsonl");
        let recorder = RecordingProvider::create(mock(), &path).unwrap();
        let params = GenerationParams::default();
        let transcripts: Vec<Vec<Message>> = (0..6)
            .map(|i| vec![Message::user(format!("question {i}"))])
            .collect();
        let live: Vec<ModelResponse> = transcripts
            .iter()
            .map(|t| recorder.complete(t, &params).unwrap())
            .collect();
        drop(recorder);

        let replay = ReplayProvider::open(&path).unwrap();
        assert_eq!(replay.len(), 6);
        for (t, expected) in transcripts.iter().zip(&live) {
            let got = replay.complete(t, &params).unwrap();
            assert_eq!(got.text, expected.text);
            assert_eq!(got.usage, expected.usage);
            assert_eq!(got.latency, expected.latency);
        }
    }

    #[test]
    fn unknown_request_is_a_miss() {
        let replay = ReplayProvider::from_records(HashMap::new());
        assert!(matches!(
            replay.complete(&[Message::user("q")], &GenerationParams::default()),
            Err(ProviderError::CassetteMiss(_))
        ));
    }

    #[test]
    fn parse_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "\n{not json}\n").unwrap();
        match ReplayProvider::open(&path) {
            Err(CassetteError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hash_changes_with_params() {
        let t = vec![Message::user("q")];
        let mut p = GenerationParams::default();
        let h1 = request_hash(&t, &p);
        p.thinking_budget = Some(1024);
        assert_ne!(h1, request_hash(&t, &p));
        assert_eq!(h1.len(), 64);
    }
}
