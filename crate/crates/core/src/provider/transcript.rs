use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{prompt_hash, LlmProvider, ProviderError, ProviderMode, Tier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallKind {
    Fast,
    Deep,
    Embed,
}

impl From<Tier> for CallKind {
    fn from(t: Tier) -> Self {
        match t {
            Tier::Fast => CallKind::Fast,
            Tier::Deep => CallKind::Deep,
        }
    }
}

impl fmt::Display for CallKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CallKind::Fast => "fast",
            CallKind::Deep => "deep",
            CallKind::Embed => "embed",
        })
    }
}

/// One provider call. Embedding responses are JSON arrays of floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub hash: String,
    pub tier: CallKind,
    pub prompt: String,
    pub response: String,
    /// Seconds since the Unix epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn parse(text: &str) -> Result<Self, ProviderError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(line).map_err(|e| ProviderError::Io(format!("transcript line {}: {e}", i + 1)))?;
            records.push(rec);
        }
        Ok(Self { records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ProviderError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
    }
}

fn now() -> Option<u64> {
    SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
}

/// Passes calls through to `inner` and appends every exchange to a
/// transcript, one JSON line per call.
pub struct RecordingProvider<P> {
    inner: P,
    sink: Mutex<Sink>,
}

enum Sink {
    Memory(Vec<TranscriptRecord>),
    File(BufWriter<File>),
}

impl<P: LlmProvider> RecordingProvider<P> {
    pub fn in_memory(inner: P) -> Self {
        Self { inner, sink: Mutex::new(Sink::Memory(Vec::new())) }
    }

    /// Appends to `path`, creating it (and its parent directory) if needed.
    pub fn to_file(inner: P, path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let io = |e: std::io::Error| ProviderError::Io(format!("{}: {e}", path.display()));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(Self { inner, sink: Mutex::new(Sink::File(BufWriter::new(file))) })
    }

    /// Records captured so far (in-memory sinks only).
    pub fn records(&self) -> Vec<TranscriptRecord> {
        match &*self.sink.lock().expect("sink lock") {
            Sink::Memory(r) => r.clone(),
            Sink::File(_) => Vec::new(),
        }
    }

    pub fn into_inner(self) -> P {
        self.inner
    }

    fn append(&self, kind: CallKind, prompt: &str, response: String) -> Result<(), ProviderError> {
        let rec = TranscriptRecord { hash: prompt_hash(prompt), tier: kind, prompt: prompt.to_string(), response, timestamp: now() };
        match &mut *self.sink.lock().expect("sink lock") {
            Sink::Memory(r) => r.push(rec),
            Sink::File(w) => {
                let line = serde_json::to_string(&rec).expect("record serializes");
                writeln!(w, "{line}").and_then(|_| w.flush()).map_err(|e| ProviderError::Io(e.to_string()))?;
            }
        }
        Ok(())
    }
}

impl<P: LlmProvider> LlmProvider for RecordingProvider<P> {
    fn complete(&self, prompt: &str, tier: Tier) -> Result<String, ProviderError> {
        let out = self.inner.complete(prompt, tier)?;
        self.append(tier.into(), prompt, out.clone())?;
        Ok(out)
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        let v = self.inner.embed(text)?;
        self.append(CallKind::Embed, text, serde_json::to_string(&v).expect("floats serialize"))?;
        Ok(v)
    }

    fn mode(&self) -> ProviderMode {
        self.inner.mode()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embedding_family(&self) -> String {
        self.inner.embedding_family()
    }
}

/// Serves responses from a transcript. The n-th identical request (same
/// hash and tier) gets the n-th recorded response; anything else fails.
pub struct ReplayProvider {
    responses: HashMap<(String, CallKind), Vec<String>>,
    served: Mutex<HashMap<(String, CallKind), usize>>,
    dimension: usize,
    family: String,
}

impl ReplayProvider {
    pub fn new(transcript: Transcript, dimension: usize, family: impl Into<String>) -> Self {
        let mut responses: HashMap<_, Vec<String>> = HashMap::new();
        for r in transcript.records {
            responses.entry((r.hash, r.tier)).or_default().push(r.response);
        }
        Self { responses, served: Mutex::new(HashMap::new()), dimension, family: family.into() }
    }

    fn next(&self, input: &str, kind: CallKind) -> Result<String, ProviderError> {
        let key = (prompt_hash(input), kind);
        let mut served = self.served.lock().expect("replay lock");
        let n = served.entry(key.clone()).or_insert(0);
        let hit = self.responses.get(&key).and_then(|r| r.get(*n)).cloned();
        match hit {
            Some(r) => {
                *n += 1;
                Ok(r)
            }
            None => Err(ProviderError::ReplayMiss { hash: key.0, kind, occurrence: *n }),
        }
    }
}

impl LlmProvider for ReplayProvider {
    fn complete(&self, prompt: &str, tier: Tier) -> Result<String, ProviderError> {
        self.next(prompt, tier.into())
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        let raw = self.next(text, CallKind::Embed)?;
        let v: Vec<f32> = serde_json::from_str(&raw).map_err(|e| ProviderError::BadResponse(format!("recorded embedding: {e}")))?;
        if v.len() != self.dimension {
            return Err(ProviderError::Dimension { found: v.len(), expected: self.dimension });
        }
        Ok(v)
    }

    fn mode(&self) -> ProviderMode {
        ProviderMode::Replay
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embedding_family(&self) -> String {
        self.family.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{MockProvider, MOCK_DIMENSION};

    #[test]
    fn record_then_replay_is_exact() {
        let rec = RecordingProvider::in_memory(MockProvider::new());
        let a = rec.complete("# prompt: other\nhello", Tier::Fast).unwrap();
        let v = rec.embed("order processing").unwrap();
        let transcript = Transcript { records: rec.records() };
        let text = transcript.to_jsonl();
        let back = Transcript::parse(&text).unwrap();
        assert_eq!(back, transcript);

        let replay = ReplayProvider::new(back, MOCK_DIMENSION, "mock");
        assert_eq!(replay.complete("# prompt: other\nhello", Tier::Fast).unwrap(), a);
        assert_eq!(replay.embed("order processing").unwrap(), v);
        // Occurrence 1 was never recorded.
        assert!(matches!(
            replay.complete("# prompt: other\nhello", Tier::Fast),
            Err(ProviderError::ReplayMiss { occurrence: 1, .. })
        ));
        // Same prompt, other tier.
        assert!(replay.complete("# prompt: other\nhello", Tier::Deep).is_err());
        assert_eq!(replay.mode(), ProviderMode::Replay);
    }

    #[test]
    fn occurrences_are_served_in_order() {
        let t = Transcript {
            records: ["one", "two"]
                .iter()
                .map(|r| TranscriptRecord { hash: prompt_hash("p"), tier: CallKind::Deep, prompt: "p".into(), response: r.to_string(), timestamp: None })
                .collect(),
        };
        let replay = ReplayProvider::new(t, 4, "x");
        assert_eq!(replay.complete("p", Tier::Deep).unwrap(), "one");
        assert_eq!(replay.complete("p", Tier::Deep).unwrap(), "two");
    }

    #[test]
    fn file_sink_appends_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t/transcript.jsonl");
        let rec = RecordingProvider::to_file(MockProvider::new(), &path).unwrap();
        rec.complete("a", Tier::Fast).unwrap();
        rec.complete("b", Tier::Deep).unwrap();
        drop(rec);
        let t = Transcript::load(&path).unwrap();
        assert_eq!(t.records.len(), 2);
        assert_eq!(t.records[1].tier, CallKind::Deep);
        assert!(Transcript::parse("{bad").is_err());
    }
}
