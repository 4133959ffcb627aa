//! The full build: structure, descriptions, entities, embeddings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enrich::{build_semantic_layer, describe_all, EnrichConfig, EnrichError, EnrichReport};
use crate::extract::{build_structural_graph, scan_repository, ExtractConfig, ExtractError, ExtractionReport, RepoSpec};
use crate::graph::CodeGraph;
use crate::index::{embed_all, EmbedReport, IndexError};
use crate::provider::LlmProvider;
use crate::templates::build_templates_hash;

pub const META_TEMPLATES: &str = "templates_hash";
pub const META_PROVIDER_MODE: &str = "provider_mode";

/// Build phases in the order they run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Scanning,
    Structural,
    Describing,
    Entities,
    Embedding,
    Done,
    Failed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub files: usize,
    pub nodes: usize,
    pub edges: usize,
    pub entities: usize,
    pub embedded: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildReport {
    pub extraction: ExtractionReport,
    pub enrichment: EnrichReport,
    pub embedding: EmbedReport,
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Enrich(#[from] EnrichError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Default)]
pub struct BuildConfig {
    pub extract: ExtractConfig,
    pub enrich: EnrichConfig,
}

/// Runs every phase, reporting each one as it starts and `Done` at the end.
/// `Failed` is reported before an error is returned.
pub fn build_system(
    specs: &[RepoSpec],
    system_name: &str,
    provider: &dyn LlmProvider,
    config: &BuildConfig,
    on_phase: &mut dyn FnMut(Phase, &Progress),
) -> Result<(CodeGraph, BuildReport), BuildError> {
    let mut progress = Progress::default();
    let result = build_inner(specs, system_name, provider, config, &mut progress, on_phase);
    match &result {
        Ok(_) => on_phase(Phase::Done, &progress),
        Err(e) => {
            tracing::error!(error = %e, "build failed");
            on_phase(Phase::Failed, &progress);
        }
    }
    result
}

fn build_inner(
    specs: &[RepoSpec],
    system_name: &str,
    provider: &dyn LlmProvider,
    config: &BuildConfig,
    progress: &mut Progress,
    on_phase: &mut dyn FnMut(Phase, &Progress),
) -> Result<(CodeGraph, BuildReport), BuildError> {
    on_phase(Phase::Scanning, progress);
    for spec in specs {
        progress.files += scan_repository(spec, config.extract.max_file_bytes)?.len();
    }

    on_phase(Phase::Structural, progress);
    let structural = build_structural_graph(specs, system_name, &config.extract)?;
    let mut graph = structural.graph;
    progress.nodes = graph.node_count();
    progress.edges = graph.edge_count();

    on_phase(Phase::Describing, progress);
    let mut enrichment = EnrichReport::default();
    describe_all(&mut graph, provider, &config.enrich, &mut enrichment)?;

    on_phase(Phase::Entities, progress);
    build_semantic_layer(&mut graph, provider, &config.enrich, &mut enrichment)?;
    progress.entities = enrichment.entities;
    progress.nodes = graph.node_count();
    progress.edges = graph.edge_count();

    on_phase(Phase::Embedding, progress);
    let embedding = embed_all(&mut graph, provider, config.enrich.retries)?;
    progress.embedded = embedding.embedded;

    let meta = &mut graph.meta_mut().attrs;
    meta.insert(META_TEMPLATES.into(), build_templates_hash());
    meta.insert(META_PROVIDER_MODE.into(), provider.mode().to_string());
    Ok((graph, BuildReport { extraction: structural.report, enrichment, embedding }))
}
