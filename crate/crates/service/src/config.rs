//! System configuration file (TOML). Relative paths resolve against the
//! directory holding the file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use repograph_core::agent::AgentConfig;
use repograph_core::enrich::EnrichConfig;
use repograph_core::extract::{adapter_for, ExtractConfig, ParseOptions, RepoSpec};
use repograph_core::index::{SearchParams, DEFAULT_K, DEFAULT_THRESHOLD};
use repograph_core::pipeline::BuildConfig;
use repograph_core::provider::{
    LiveConfig, LiveProvider, LlmProvider, MockProvider, ProviderMode, RecordingProvider, ReplayProvider, Transcript, MOCK_DIMENSION,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepoConfig {
    pub name: String,
    pub root: PathBuf,
    pub language: String,
    #[serde(default)]
    pub include: Vec<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    /// Replay reads it; live and mock append every call to it when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fast_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deep_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<u64>,
    /// Embedding family reported in replay mode; defaults to the family the
    /// live or mock provider would report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            mode: ProviderMode::Mock,
            transcript: None,
            endpoint: None,
            fast_model: None,
            deep_model: None,
            embed_model: None,
            api_key_env: None,
            dimension: None,
            timeout_secs: None,
            family: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexConfig {
    pub k: usize,
    pub threshold: f32,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self { k: DEFAULT_K, threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentBudget {
    pub max_steps: usize,
    pub obs_tokens: usize,
    pub retries: usize,
}

impl Default for AgentBudget {
    fn default() -> Self {
        let d = AgentConfig::default();
        Self { max_steps: d.max_steps, obs_tokens: d.obs_tokens, retries: d.retries }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildSettings {
    pub parallelism: usize,
    pub retries: usize,
    pub strict: bool,
    pub max_file_bytes: u64,
    pub promote_methods: bool,
}

impl Default for BuildSettings {
    fn default() -> Self {
        let e = ExtractConfig::default();
        let n = EnrichConfig::default();
        Self {
            parallelism: e.parallelism,
            retries: n.retries,
            strict: n.strict,
            max_file_bytes: e.max_file_bytes,
            promote_methods: e.options.promote_methods,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
    pub snapshot: PathBuf,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub index: IndexConfig,
    #[serde(default)]
    pub agent: AgentBudget,
    #[serde(default)]
    pub build: BuildSettings,
    pub repos: Vec<RepoConfig>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl SystemConfig {
    /// Reads, resolves relative paths and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut cfg: SystemConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Syntax { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.snapshot = resolve(base, &self.snapshot);
        if let Some(t) = &self.provider.transcript {
            self.provider.transcript = Some(resolve(base, t));
        }
        for r in &mut self.repos {
            r.root = resolve(base, &r.root);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.name.trim().is_empty() {
            return bad("system name must not be empty".into());
        }
        if self.repos.is_empty() {
            return bad("at least one [[repos]] entry is required".into());
        }
        let mut names = BTreeSet::new();
        for r in &self.repos {
            if r.name.trim().is_empty() {
                return bad("repository name must not be empty".into());
            }
            if !names.insert(r.name.as_str()) {
                return bad(format!("duplicate repository name {:?}", r.name));
            }
            if !r.root.is_dir() {
                return bad(format!("repository {:?}: root {} does not exist or is not a directory", r.name, r.root.display()));
            }
            if adapter_for(&r.language).is_none() {
                return bad(format!("repository {:?}: unknown language {:?} (expected java, python or facts)", r.name, r.language));
            }
            for g in r.include.iter().chain(&r.exclude) {
                if let Err(e) = globset::Glob::new(g) {
                    return bad(format!("repository {:?}: invalid glob {g:?}: {e}", r.name));
                }
            }
        }
        let p = &self.provider;
        if p.dimension == Some(0) {
            return bad("provider.dimension must be positive".into());
        }
        match p.mode {
            ProviderMode::Live => {
                for (key, v) in [("endpoint", &p.endpoint), ("fast_model", &p.fast_model), ("deep_model", &p.deep_model), ("embed_model", &p.embed_model)] {
                    if v.as_deref().is_none_or(|s| s.trim().is_empty()) {
                        return bad(format!("provider.{key} is required in live mode"));
                    }
                }
                if p.dimension.is_none() {
                    return bad("provider.dimension is required in live mode".into());
                }
            }
            ProviderMode::Replay => match &p.transcript {
                None => return bad("provider.transcript is required in replay mode".into()),
                Some(t) if !t.is_file() => return bad(format!("transcript {} does not exist", t.display())),
                Some(_) => {}
            },
            ProviderMode::Mock => {}
        }
        if let Some(var) = &p.api_key_env {
            if var.is_empty() || !var.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return bad(format!("provider.api_key_env must name an environment variable, got {var:?}"));
            }
        }
        self.agent_config().validate().map_err(ConfigError::Invalid)?;
        if self.build.parallelism == 0 {
            return bad("build.parallelism must be at least 1".into());
        }
        Ok(())
    }

    pub fn repo_specs(&self) -> Vec<RepoSpec> {
        self.repos
            .iter()
            .map(|r| RepoSpec {
                name: r.name.clone(),
                root: r.root.clone(),
                language: r.language.clone(),
                include: r.include.clone(),
                exclude: r.exclude.clone(),
                url: r.url.clone(),
            })
            .collect()
    }

    pub fn search_params(&self) -> SearchParams {
        SearchParams { k: self.index.k, threshold: self.index.threshold }
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            max_steps: self.agent.max_steps,
            obs_tokens: self.agent.obs_tokens,
            search: self.search_params(),
            retries: self.agent.retries,
        }
    }

    pub fn build_config(&self) -> BuildConfig {
        BuildConfig {
            extract: ExtractConfig {
                options: ParseOptions { promote_methods: self.build.promote_methods },
                max_file_bytes: self.build.max_file_bytes,
                parallelism: self.build.parallelism,
            },
            enrich: EnrichConfig { parallelism: self.build.parallelism, retries: self.build.retries, strict: self.build.strict },
        }
    }

    fn live_config(&self) -> Option<LiveConfig> {
        let p = &self.provider;
        Some(LiveConfig {
            endpoint: p.endpoint.clone()?,
            fast_model: p.fast_model.clone()?,
            deep_model: p.deep_model.clone()?,
            embed_model: p.embed_model.clone()?,
            api_key_env: p.api_key_env.clone(),
            dimension: p.dimension?,
            timeout_secs: p.timeout_secs.unwrap_or(120),
            max_retries: 2,
            retry_backoff_ms: 500,
        })
    }

    /// Builds the configured provider, wrapped in a recorder when a
    /// transcript path is set outside replay mode.
    pub fn make_provider(&self) -> Result<Arc<dyn LlmProvider>, ConfigError> {
        let p = &self.provider;
        let perr = |e: repograph_core::provider::ProviderError| ConfigError::Invalid(format!("provider: {e}"));
        match p.mode {
            ProviderMode::Mock => {
                let mock = MockProvider::with_dimension(p.dimension.unwrap_or(MOCK_DIMENSION));
                match &p.transcript {
                    Some(t) => Ok(Arc::new(RecordingProvider::to_file(mock, t).map_err(perr)?)),
                    None => Ok(Arc::new(mock)),
                }
            }
            ProviderMode::Live => {
                let cfg = self.live_config().ok_or_else(|| ConfigError::Invalid("incomplete live provider settings".into()))?;
                let live = LiveProvider::new(cfg).map_err(perr)?;
                match &p.transcript {
                    Some(t) => Ok(Arc::new(RecordingProvider::to_file(live, t).map_err(perr)?)),
                    None => Ok(Arc::new(live)),
                }
            }
            ProviderMode::Replay => {
                let path = p.transcript.as_ref().ok_or_else(|| ConfigError::Invalid("replay needs a transcript".into()))?;
                let transcript = Transcript::load(path).map_err(perr)?;
                let dimension = p.dimension.unwrap_or(MOCK_DIMENSION);
                let family = match (&p.family, &p.embed_model) {
                    (Some(f), _) => f.clone(),
                    (None, Some(m)) => format!("live:{m}/{dimension}"),
                    (None, None) => MockProvider::with_dimension(dimension).embedding_family(),
                };
                Ok(Arc::new(ReplayProvider::new(transcript, dimension, family)))
            }
        }
    }
}
