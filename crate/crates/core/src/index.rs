//! Exact semantic search over node description embeddings.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CodeGraph, GraphError, NodeId, NodeKind};
use crate::provider::{with_retries, LlmProvider, ProviderError};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_THRESHOLD: f32 = 0.35;

pub const META_FAMILY: &str = "embedding_family";
pub const META_DIMENSION: &str = "embedding_dim";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub k: usize,
    pub threshold: f32,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self { k: DEFAULT_K, threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: NodeId,
    pub score: f32,
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("the graph has no embeddings")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("graph embeddings come from {graph:?} but the provider embeds with {provider:?}")]
    FamilyMismatch { graph: String, provider: String },
    #[error("query embedding failed: {0}")]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EmbedReport {
    pub embedded: usize,
    /// Nodes without a description.
    pub skipped: Vec<String>,
    /// Nodes whose embedding call failed.
    pub degraded: Vec<String>,
}

/// Embeds the description of every described node and records the
/// embedding family and dimension in the graph metadata.
pub fn embed_all(graph: &mut CodeGraph, provider: &dyn LlmProvider, retries: usize) -> Result<EmbedReport, IndexError> {
    let mut report = EmbedReport::default();
    let jobs: Vec<(NodeId, Option<String>)> = graph
        .nodes()
        .map(|n| (n.id.clone(), n.description.clone().filter(|d| !d.trim().is_empty())))
        .collect();
    for (id, description) in jobs {
        let Some(text) = description else {
            report.skipped.push(id.to_string());
            continue;
        };
        match with_retries(retries, || provider.embed(&text)) {
            Ok(v) if v.len() == provider.dimension() => {
                graph.set_embedding(&id, v)?;
                report.embedded += 1;
            }
            Ok(v) => {
                let e = ProviderError::Dimension { found: v.len(), expected: provider.dimension() };
                graph.set_attr(&id, "degraded", e.to_string())?;
                report.degraded.push(id.to_string());
            }
            Err(e) => {
                tracing::warn!(node = %id, error = %e, "embedding degraded");
                graph.set_attr(&id, "degraded", e.to_string())?;
                report.degraded.push(id.to_string());
            }
        }
    }
    let meta = &mut graph.meta_mut().attrs;
    meta.insert(META_FAMILY.into(), provider.embedding_family());
    meta.insert(META_DIMENSION.into(), provider.dimension().to_string());
    Ok(report)
}

/// Dot product in f64; equals cosine for unit vectors.
pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum::<f64>() as f32
}

/// Orders hits by score descending, then id ascending.
pub fn rank(hits: &mut [SearchHit]) {
    hits.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then_with(|| a.id.cmp(&b.id)));
}

/// Checks that the graph has embeddings compatible with `provider`.
pub fn check_index(graph: &CodeGraph, provider: &dyn LlmProvider) -> Result<(), IndexError> {
    if !graph.nodes().any(|n| n.embedding.is_some()) {
        return Err(IndexError::EmptyIndex);
    }
    let family = graph.meta().attrs.get(META_FAMILY).cloned().unwrap_or_default();
    if family != provider.embedding_family() {
        return Err(IndexError::FamilyMismatch { graph: family, provider: provider.embedding_family() });
    }
    Ok(())
}

/// Top-`k` nodes (optionally of one kind) with cosine >= `threshold`.
pub fn search(
    graph: &CodeGraph,
    provider: &dyn LlmProvider,
    query: &str,
    kind: Option<NodeKind>,
    params: SearchParams,
) -> Result<Vec<SearchHit>, IndexError> {
    if params.k == 0 {
        return Err(IndexError::InvalidK);
    }
    check_index(graph, provider)?;
    let q = provider.embed(query)?;
    Ok(search_vector(graph, &q, kind, params))
}

/// Search with an already embedded query.
pub fn search_vector(graph: &CodeGraph, q: &[f32], kind: Option<NodeKind>, params: SearchParams) -> Vec<SearchHit> {
    let mut hits: Vec<SearchHit> = graph
        .nodes()
        .filter(|n| kind.is_none_or(|k| n.kind == k))
        .filter_map(|n| n.embedding.as_ref().map(|e| SearchHit { id: n.id.clone(), score: cosine(q, e) }))
        .filter(|h| h.score >= params.threshold)
        .collect();
    rank(&mut hits);
    hits.truncate(params.k);
    hits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Node;
    use crate::provider::MockProvider;

    fn graph() -> CodeGraph {
        let mut g = CodeGraph::new("s");
        g.add_node(Node::new(NodeId::system("s"), NodeKind::System, "s").with_description("order system")).unwrap();
        for (id, d) in [("a", "order processing"), ("b", "order processing"), ("c", "invoice"), ("d", "")] {
            g.add_node(Node::new(NodeId::new(id).unwrap(), NodeKind::Code, id).with_description(d)).unwrap();
        }
        g
    }

    #[test]
    fn embed_and_search() {
        let mut g = graph();
        let p = MockProvider::new();
        let r = embed_all(&mut g, &p, 0).unwrap();
        assert_eq!(r.embedded, 4);
        assert_eq!(r.skipped, ["d"]);
        let hits = search(&g, &p, "order processing", Some(NodeKind::Code), SearchParams { k: 5, threshold: 0.5 }).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.id.as_str()).collect();
        // Exact tie broken by id.
        assert_eq!(ids, ["a", "b"]);
        assert!((hits[0].score - 1.0).abs() < 1e-6);
        let none = search(&g, &p, "order", None, SearchParams { k: 5, threshold: 1.1 }).unwrap();
        assert!(none.is_empty());
        let all = search(&g, &p, "order", None, SearchParams { k: 50, threshold: -1.0 }).unwrap();
        assert_eq!(all.len(), 4);
    }

    #[test]
    fn errors() {
        let g = graph();
        let p = MockProvider::new();
        assert!(matches!(search(&g, &p, "x", None, SearchParams::default()), Err(IndexError::EmptyIndex)));
        assert!(matches!(search(&g, &p, "x", None, SearchParams { k: 0, threshold: 0.0 }), Err(IndexError::InvalidK)));
        let mut g = graph();
        embed_all(&mut g, &MockProvider::with_dimension(64), 0).unwrap();
        assert!(matches!(search(&g, &p, "x", None, SearchParams::default()), Err(IndexError::FamilyMismatch { .. })));
    }
}
