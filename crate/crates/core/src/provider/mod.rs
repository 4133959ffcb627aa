//! Language-model access behind one trait, in three modes: live (HTTP
//! endpoint), replay (recorded transcript) and mock (pure function).

mod live;
mod mock;
mod scripted;
mod transcript;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use live::{LiveConfig, LiveProvider};
pub use mock::{mock_embedding, MockProvider, MOCK_DIMENSION};
pub use scripted::{ScriptStep, ScriptedProvider};
pub use transcript::{CallKind, RecordingProvider, ReplayProvider, Transcript, TranscriptRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    /// Small, cheap model (per-code summaries).
    Fast,
    /// Larger model (project/system descriptions, entities, agent).
    Deep,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Fast => "fast",
            Tier::Deep => "deep",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    Live,
    Replay,
    Mock,
}

impl ProviderMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "live" => Some(Self::Live),
            "replay" => Some(Self::Replay),
            "mock" => Some(Self::Mock),
            _ => None,
        }
    }
}

impl fmt::Display for ProviderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderMode::Live => "live",
            ProviderMode::Replay => "replay",
            ProviderMode::Mock => "mock",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("no recorded {kind} response for prompt {hash} (occurrence {occurrence})")]
    ReplayMiss { hash: String, kind: CallKind, occurrence: usize },
    #[error("provider request failed: {0}")]
    Request(String),
    #[error("provider returned an unusable response: {0}")]
    BadResponse(String),
    #[error("embedding has dimension {found}, expected {expected}")]
    Dimension { found: usize, expected: usize },
    #[error("scripted provider exhausted after {0} responses")]
    Exhausted(usize),
    #[error("provider failure: {0}")]
    Failure(String),
    #[error("transcript i/o failure: {0}")]
    Io(String),
}

pub trait LlmProvider: Send + Sync {
    fn complete(&self, prompt: &str, tier: Tier) -> Result<String, ProviderError>;

    /// Unit-norm vector of length [`LlmProvider::dimension`]. Text without
    /// any token may yield the zero vector.
    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError>;

    fn mode(&self) -> ProviderMode;

    fn dimension(&self) -> usize;

    /// Identifies the embedding space; embeddings from different families
    /// must never be compared.
    fn embedding_family(&self) -> String;
}

impl<P: LlmProvider + ?Sized> LlmProvider for Box<P> {
    fn complete(&self, prompt: &str, tier: Tier) -> Result<String, ProviderError> {
        (**self).complete(prompt, tier)
    }
    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        (**self).embed(text)
    }
    fn mode(&self) -> ProviderMode {
        (**self).mode()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embedding_family(&self) -> String {
        (**self).embedding_family()
    }
}

impl<P: LlmProvider + ?Sized> LlmProvider for std::sync::Arc<P> {
    fn complete(&self, prompt: &str, tier: Tier) -> Result<String, ProviderError> {
        (**self).complete(prompt, tier)
    }
    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        (**self).embed(text)
    }
    fn mode(&self) -> ProviderMode {
        (**self).mode()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embedding_family(&self) -> String {
        (**self).embedding_family()
    }
}

/// Hex SHA-256 of a prompt or embedding input.
pub fn prompt_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Scales `v` to unit length; zero vectors are returned unchanged.
pub fn normalize(mut v: Vec<f32>) -> Vec<f32> {
    let norm = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x = (*x as f64 / norm) as f32;
        }
    }
    v
}

/// Retries `f` up to `retries` extra times on failure.
pub fn with_retries<T>(retries: usize, mut f: impl FnMut() -> Result<T, ProviderError>) -> Result<T, ProviderError> {
    let mut attempt = 0;
    loop {
        match f() {
            Ok(v) => return Ok(v),
            // A missing recording never appears on retry.
            Err(e @ ProviderError::ReplayMiss { .. }) => return Err(e),
            Err(e) if attempt >= retries => return Err(e),
            Err(e) => {
                tracing::debug!(attempt, error = %e, "retrying provider call");
                attempt += 1;
            }
        }
    }
}

/// The `# prompt: <kind>` header of a rendered template.
pub fn prompt_kind(prompt: &str) -> Option<&str> {
    prompt.lines().next()?.strip_prefix("# prompt:").map(str::trim)
}
