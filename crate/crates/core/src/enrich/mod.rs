//! Generative enrichment: code -> project -> system descriptions, then
//! domain entities linked to code and projects.

mod entities;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{CodeGraph, GraphError, Node, NodeId, NodeKind, CONTAINS};
use crate::provider::{with_retries, LlmProvider, ProviderError, Tier};
use crate::templates::{self, render};

pub use entities::{
    apply_semantic_layer, extract_entities, merge_entities, normalize_entity_name, parse_extraction, EntityExtraction,
    ExtractedEntity, Operation,
};

pub const EMPTY_CODE: &str = "Empty code unit.";
pub const EMPTY_PROJECT: &str = "Empty project.";
pub const EMPTY_SYSTEM: &str = "Empty system.";

#[derive(Debug, Clone, Serialize)]
pub struct EnrichConfig {
    /// Concurrent describe_code calls.
    pub parallelism: usize,
    /// Extra attempts after a failed provider call.
    pub retries: usize,
    /// Abort on the first provider failure instead of degrading the node.
    pub strict: bool,
}

impl Default for EnrichConfig {
    fn default() -> Self {
        Self { parallelism: 4, retries: 2, strict: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EnrichReport {
    pub described: usize,
    /// Nodes described without a provider call (empty source or project).
    pub short_circuited: usize,
    /// Nodes left without a description after provider failures.
    pub degraded: Vec<String>,
    pub entities: usize,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Error)]
pub enum EnrichError {
    #[error("provider failure on {node}: {source}")]
    Provider {
        node: String,
        #[source]
        source: ProviderError,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub fn describe_code_prompt(node: &Node, project: &str) -> String {
    render(
        templates::DESCRIBE_CODE,
        &[
            ("name", &node.name),
            ("unit_kind", node.attr("unit_kind").unwrap_or("code")),
            ("project", project),
            ("file", node.attr("file").unwrap_or("")),
            ("source", node.attr("source").unwrap_or("")),
        ],
    )
}

/// Summary of one code unit (fast tier). Empty source short-circuits.
pub fn describe_code(node: &Node, project: &str, provider: &dyn LlmProvider, retries: usize) -> Result<Option<String>, ProviderError> {
    if node.attr("source").unwrap_or("").trim().is_empty() {
        return Ok(None);
    }
    let prompt = describe_code_prompt(node, project);
    with_retries(retries, || provider.complete(&prompt, Tier::Fast)).map(|s| Some(s.trim().to_string()))
}

fn children(graph: &CodeGraph, project: &NodeId) -> Vec<NodeId> {
    let mut ids: Vec<NodeId> = graph
        .out_edges(project)
        .filter(|k| k.label.as_str() == CONTAINS)
        .map(|k| k.dst.clone())
        .filter(|id| graph.node(id).is_some_and(|n| n.kind == NodeKind::Code))
        .collect();
    ids.sort();
    ids
}

fn description_or_placeholder(node: &Node) -> &str {
    node.description.as_deref().unwrap_or("(no description)")
}

/// Prompt aggregating child descriptions in NodeId order; `None` for a
/// project without code.
pub fn describe_project_prompt(graph: &CodeGraph, project: &NodeId) -> Option<String> {
    let kids = children(graph, project);
    if kids.is_empty() {
        return None;
    }
    let lines: Vec<String> = kids
        .iter()
        .filter_map(|id| graph.node(id))
        .map(|n| format!("- {} ({}): {}", n.id, n.name, one_line(description_or_placeholder(n))))
        .collect();
    let name = graph.node(project).map_or("", |n| n.name.as_str());
    Some(render(templates::DESCRIBE_PROJECT, &[("project", name), ("children", &lines.join("\n"))]))
}

pub fn describe_system_prompt(graph: &CodeGraph) -> Option<String> {
    let mut projects: Vec<&Node> = graph.nodes_of_kind(NodeKind::Project).collect();
    if projects.is_empty() {
        return None;
    }
    projects.sort_by(|a, b| a.id.cmp(&b.id));
    let lines: Vec<String> = projects.iter().map(|n| format!("- {}: {}", n.name, one_line(description_or_placeholder(n)))).collect();
    Some(render(templates::DESCRIBE_SYSTEM, &[("system", &graph.meta().system_name), ("projects", &lines.join("\n"))]))
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn record(
    graph: &mut CodeGraph,
    report: &mut EnrichReport,
    cfg: &EnrichConfig,
    id: &NodeId,
    result: Result<Option<String>, ProviderError>,
    placeholder: &str,
) -> Result<(), EnrichError> {
    match result {
        Ok(Some(d)) if !d.is_empty() => {
            graph.set_description(id, d)?;
            report.described += 1;
        }
        Ok(_) => {
            graph.set_description(id, placeholder)?;
            report.short_circuited += 1;
        }
        Err(e) if cfg.strict => return Err(EnrichError::Provider { node: id.to_string(), source: e }),
        Err(e) => {
            tracing::warn!(node = %id, error = %e, "description degraded");
            graph.set_attr(id, "degraded", e.to_string())?;
            report.degraded.push(id.to_string());
        }
    }
    Ok(())
}

/// Describes every Code node (in parallel), then every Project, then the
/// System, so each level sees the finished level below.
pub fn describe_all(
    graph: &mut CodeGraph,
    provider: &dyn LlmProvider,
    cfg: &EnrichConfig,
    report: &mut EnrichReport,
) -> Result<(), EnrichError> {
    let jobs: Vec<(NodeId, String)> = graph
        .nodes_of_kind(NodeKind::Code)
        .map(|n| {
            let project = graph.project_of(&n.id).and_then(|p| graph.node(p)).map_or(String::new(), |p| p.name.clone());
            (n.id.clone(), project)
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.parallelism.max(1)).build().expect("thread pool");
    let results: Vec<(NodeId, Result<Option<String>, ProviderError>)> = {
        let g = &*graph;
        pool.install(|| {
            jobs.par_iter()
                .map(|(id, project)| {
                    let node = g.node(id).expect("job ids come from the graph");
                    (id.clone(), describe_code(node, project, provider, cfg.retries))
                })
                .collect()
        })
    };
    for (id, r) in results {
        record(graph, report, cfg, &id, r, EMPTY_CODE)?;
    }

    let projects: Vec<NodeId> = graph.nodes_of_kind(NodeKind::Project).map(|n| n.id.clone()).collect();
    for id in projects {
        let r = match describe_project_prompt(graph, &id) {
            None => Ok(None),
            Some(p) => with_retries(cfg.retries, || provider.complete(&p, Tier::Deep)).map(|s| Some(s.trim().to_string())),
        };
        record(graph, report, cfg, &id, r, EMPTY_PROJECT)?;
    }

    if let Some(system) = graph.system_id().cloned() {
        let r = match describe_system_prompt(graph) {
            None => Ok(None),
            Some(p) => with_retries(cfg.retries, || provider.complete(&p, Tier::Deep)).map(|s| Some(s.trim().to_string())),
        };
        record(graph, report, cfg, &system, r, EMPTY_SYSTEM)?;
    }
    Ok(())
}

/// Per-project entity extraction, merge and application to the graph.
pub fn build_semantic_layer(
    graph: &mut CodeGraph,
    provider: &dyn LlmProvider,
    cfg: &EnrichConfig,
    report: &mut EnrichReport,
) -> Result<(), EnrichError> {
    let projects: Vec<NodeId> = graph.nodes_of_kind(NodeKind::Project).map(|n| n.id.clone()).collect();
    let mut extractions = Vec::new();
    for p in &projects {
        match extract_entities(graph, p, provider, cfg.retries) {
            Ok((ex, diags)) => {
                report.diagnostics.extend(diags.into_iter().map(|d| format!("{p}: {d}")));
                extractions.push(ex);
            }
            Err(e) if cfg.strict => return Err(EnrichError::Provider { node: p.to_string(), source: e }),
            Err(e) => report.diagnostics.push(format!("{p}: entity extraction failed: {e}")),
        }
    }
    let merged = merge_entities(extractions);
    report.entities = merged.len();
    apply_semantic_layer(graph, &merged)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, Label};
    use crate::provider::{MockProvider, ScriptStep, ScriptedProvider};

    fn graph() -> CodeGraph {
        let mut g = CodeGraph::new("sys");
        let s = g.add_node(Node::new(NodeId::system("sys"), NodeKind::System, "sys")).unwrap();
        let c = Label::new(CONTAINS).unwrap();
        for p in ["b-proj", "a-proj"] {
            let pid = g.add_node(Node::new(NodeId::project(p), NodeKind::Project, p)).unwrap();
            g.add_edge(Edge::new(s.clone(), c.clone(), pid)).unwrap();
        }
        for (uid, src) in [("x.Zeta", "class Zeta {}"), ("x.Alpha", "class Alpha {}"), ("x.Blank", "  ")] {
            let n = Node::new(NodeId::new(uid).unwrap(), NodeKind::Code, &uid[2..]).with_attr("source", src).with_attr("unit_kind", "class");
            let id = g.add_node(n).unwrap();
            g.add_edge(Edge::new(NodeId::project("a-proj"), c.clone(), id)).unwrap();
        }
        g
    }

    #[test]
    fn hierarchy_with_mock() {
        let mut g = graph();
        let mut report = EnrichReport::default();
        describe_all(&mut g, &MockProvider::new(), &EnrichConfig::default(), &mut report).unwrap();
        assert_eq!(g.get("x.Alpha").unwrap().description.as_deref(), Some("Summary of Alpha: alpha class in a-proj."));
        assert_eq!(g.get("x.Blank").unwrap().description.as_deref(), Some(EMPTY_CODE));
        assert_eq!(g.get("project:b-proj").unwrap().description.as_deref(), Some(EMPTY_PROJECT));
        assert_eq!(
            g.get("project:a-proj").unwrap().description.as_deref(),
            Some("Project a-proj groups 3 code units: Alpha, Blank, Zeta.")
        );
        assert_eq!(
            g.get("system:sys").unwrap().description.as_deref(),
            Some("System sys is composed of 2 projects: a-proj, b-proj.")
        );
        assert_eq!((report.described, report.short_circuited), (4, 2));
    }

    #[test]
    fn project_prompt_lists_children_sorted() {
        let mut g = graph();
        describe_all(&mut g, &MockProvider::new(), &EnrichConfig::default(), &mut EnrichReport::default()).unwrap();
        let p = describe_project_prompt(&g, &NodeId::project("a-proj")).unwrap();
        let a = p.find("x.Alpha").unwrap();
        let b = p.find("x.Blank").unwrap();
        let z = p.find("x.Zeta").unwrap();
        assert!(a < b && b < z);
        assert_eq!(p, describe_project_prompt(&g, &NodeId::project("a-proj")).unwrap());
    }

    #[test]
    fn failures_degrade_or_abort() {
        let mut g = graph();
        let failing = ScriptedProvider::new(vec![ScriptStep::Fail("down".into()); 3]);
        let cfg = EnrichConfig { parallelism: 1, retries: 2, strict: false };
        let mut report = EnrichReport::default();
        // Alpha fails 3 times (1 + 2 retries) and is degraded; the script is
        // then exhausted so everything else degrades too.
        describe_all(&mut g, &failing, &cfg, &mut report).unwrap();
        assert!(report.degraded.contains(&"x.Alpha".to_string()));
        assert!(g.get("x.Alpha").unwrap().description.is_none());
        assert!(g.get("x.Alpha").unwrap().attr("degraded").is_some());

        let mut g = graph();
        let strict = EnrichConfig { strict: true, ..cfg };
        let err = describe_all(&mut g, &ScriptedProvider::new(Vec::<ScriptStep>::new()), &strict, &mut EnrichReport::default());
        assert!(matches!(err, Err(EnrichError::Provider { .. })));
    }
}
