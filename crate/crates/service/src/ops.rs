//! Operations shared by the CLI and the HTTP service.

use std::path::Path;

use repograph_core::graph::{load_snapshot, save_snapshot, CodeGraph, SnapshotError};
use repograph_core::pipeline::{build_system, BuildError, BuildReport, Phase, Progress};
use repograph_core::provider::LlmProvider;
use thiserror::Error;

use crate::config::SystemConfig;

#[derive(Debug, Error)]
pub enum OpError {
    #[error("build failed: {0}")]
    Build(#[from] BuildError),
    #[error("snapshot {path}: {source}")]
    Snapshot { path: String, source: SnapshotError },
    #[error("no snapshot at {0}; run `repograph build` first")]
    NotBuilt(String),
}

/// Runs the pipeline and writes the snapshot.
pub fn build_and_save(
    cfg: &SystemConfig,
    provider: &dyn LlmProvider,
    on_phase: &mut dyn FnMut(Phase, &Progress),
) -> Result<(CodeGraph, BuildReport), OpError> {
    let (graph, report) = build_system(&cfg.repo_specs(), &cfg.name, provider, &cfg.build_config(), on_phase)?;
    save_snapshot(&graph, &cfg.snapshot).map_err(|source| OpError::Snapshot { path: cfg.snapshot.display().to_string(), source })?;
    Ok((graph, report))
}

pub fn load_graph(snapshot: &Path) -> Result<CodeGraph, OpError> {
    if !snapshot.is_file() {
        return Err(OpError::NotBuilt(snapshot.display().to_string()));
    }
    load_snapshot(snapshot).map_err(|source| OpError::Snapshot { path: snapshot.display().to_string(), source })
}

/// Plain-text build summary printed by `repograph build`.
pub fn render_report(report: &BuildReport) -> String {
    let mut out = report.extraction.to_string();
    if !out.ends_with('\n') {
        out.push('\n');
    }
    let e = &report.enrichment;
    out.push_str(&format!(
        "described: {} (short-circuited {}), degraded: {}, entities: {}\n",
        e.described,
        e.short_circuited,
        e.degraded.len(),
        e.entities
    ));
    out.push_str(&format!("embedded: {}, skipped: {}, degraded: {}\n", report.embedding.embedded, report.embedding.skipped.len(), report.embedding.degraded.len()));
    for d in &e.diagnostics {
        out.push_str(&format!("note: {d}\n"));
    }
    out
}
