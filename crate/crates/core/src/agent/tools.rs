use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::action::{ToolCall, ToolName};
use super::render::{render_rows, subgraph_lines, EMPTY_RESULT};
use crate::graph::{CodeGraph, Direction, GraphError, NodeId, NodeKind, QueryError, QueryRows, Subgraph, CONTAINS};
use crate::index::{check_index, cosine, search_vector, IndexError, SearchHit, SearchParams};
use crate::provider::{with_retries, LlmProvider, ProviderError};

pub const TRUNCATION_MARKER: &str = "[... truncated]";

/// ⌈chars / 4⌉.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ToolPayload {
    Subgraph { subgraph: Subgraph },
    Rows { rows: QueryRows },
    QueryError { error: QueryError },
    Source { id: NodeId, text: String },
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub tool: ToolName,
    pub payload: ToolPayload,
    /// The observation text shown to the model.
    pub text: String,
    pub token_estimate: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<SearchParams>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hits: Vec<SearchHit>,
    #[serde(default)]
    pub truncated: bool,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("the graph has no embeddings")]
    EmptyIndex,
    #[error("the graph has no entities; build it with the semantic layer")]
    NoEntities,
    #[error("unknown node id {0:?}")]
    UnknownId(String),
    #[error("{0:?} is not a code node")]
    NotACodeNode(String),
    #[error("invalid tool arguments: {0}")]
    InvalidArgs(String),
    #[error("graph embeddings come from {graph:?} but the provider embeds with {provider:?}")]
    FamilyMismatch { graph: String, provider: String },
    #[error("query embedding failed: {0}")]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl From<IndexError> for ToolError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::EmptyIndex => ToolError::EmptyIndex,
            IndexError::InvalidK => ToolError::InvalidArgs("k must be at least 1".into()),
            IndexError::FamilyMismatch { graph, provider } => ToolError::FamilyMismatch { graph, provider },
            IndexError::Provider(p) => ToolError::Provider(p),
            IndexError::Graph(g) => ToolError::Graph(g),
        }
    }
}

/// Everything a tool needs: the read-only graph, the provider used for query
/// embeddings, search defaults and the observation budget.
#[derive(Clone, Copy)]
pub struct ToolEnv<'a> {
    pub graph: &'a CodeGraph,
    pub provider: &'a dyn LlmProvider,
    pub search: SearchParams,
    pub obs_tokens: usize,
    pub retries: usize,
}

impl ToolEnv<'_> {
    fn max_chars(&self) -> usize {
        self.obs_tokens.saturating_mul(4)
    }

    fn embed_query(&self, query: &str) -> Result<Vec<f32>, ToolError> {
        check_index(self.graph, self.provider)?;
        Ok(with_retries(self.retries, || self.provider.embed(query))?)
    }
}

fn params_from(call: &ToolCall, defaults: SearchParams) -> SearchParams {
    let k = call.args.get("k").and_then(Value::as_u64).map_or(defaults.k, |k| k as usize);
    let threshold = call.args.get("threshold").and_then(Value::as_f64).map_or(defaults.threshold, |t| t as f32);
    SearchParams { k, threshold }
}

fn arg<'c>(call: &'c ToolCall, key: &str) -> Result<&'c str, ToolError> {
    call.args
        .get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| ToolError::InvalidArgs(format!("{} needs a string {key:?}", call.tool)))
}

/// Cuts `text` to fit `max_chars` including a trailing marker line,
/// preferring a line boundary.
pub fn truncate_text(text: &str, max_chars: usize) -> (String, bool) {
    if text.chars().count() <= max_chars {
        return (text.to_string(), false);
    }
    let room = max_chars.saturating_sub(TRUNCATION_MARKER.chars().count() + 1);
    let cut = text.char_indices().nth(room).map_or(text.len(), |(i, _)| i);
    let mut kept = &text[..cut];
    if let Some(nl) = kept.rfind('\n') {
        kept = &kept[..nl];
    }
    let out = if kept.is_empty() { TRUNCATION_MARKER.to_string() } else { format!("{kept}\n{TRUNCATION_MARKER}") };
    (out, true)
}

/// Renders a subgraph under the budget. When lines must be dropped the
/// payload keeps only what the text still shows.
fn subgraph_result(env: &ToolEnv, tool: ToolName, sub: Subgraph, mut diagnostics: Vec<String>) -> ToolResult {
    let sub = sub.without_node_attr("source");
    let max = env.max_chars();
    let (text, payload, truncated) = if sub.is_empty() {
        (EMPTY_RESULT.to_string(), sub, false)
    } else {
        let lines = subgraph_lines(&sub);
        let full: usize = lines.iter().map(|(l, _, _)| l.chars().count() + 1).sum::<usize>() - 1;
        if full <= max {
            let text = lines.iter().map(|(l, _, _)| l.as_str()).collect::<Vec<_>>().join("\n");
            (text, sub.clone(), false)
        } else {
            let room = max.saturating_sub(TRUNCATION_MARKER.chars().count() + 1);
            let mut used = 0;
            let mut kept_nodes = BTreeSet::new();
            let mut kept_edges = BTreeSet::new();
            let mut text = String::new();
            for (line, node, edge) in &lines {
                let cost = line.chars().count() + usize::from(!text.is_empty());
                if used + cost > room {
                    break;
                }
                used += cost;
                if !text.is_empty() {
                    text.push('\n');
                }
                text.push_str(line);
                if let Some(n) = node {
                    kept_nodes.insert(n.id.clone());
                }
                if let Some(e) = edge {
                    kept_edges.insert((*e).clone());
                }
            }
            diagnostics.push(format!("truncated: {} of {} lines shown", kept_nodes.len() + kept_edges.len(), lines.len()));
            if text.is_empty() {
                text = TRUNCATION_MARKER.to_string();
            } else {
                text.push('\n');
                text.push_str(TRUNCATION_MARKER);
            }
            let payload = sub.filtered(|n| kept_nodes.contains(&n.id), |k| kept_edges.contains(k));
            (text, payload, true)
        }
    };
    ToolResult {
        tool,
        payload: ToolPayload::Subgraph { subgraph: payload },
        token_estimate: estimate_tokens(&text),
        text,
        params: None,
        hits: Vec::new(),
        truncated,
        diagnostics,
    }
}

fn text_result(env: &ToolEnv, tool: ToolName, text: String, payload: ToolPayload) -> ToolResult {
    let (text, truncated) = truncate_text(&text, env.max_chars());
    let mut diagnostics = Vec::new();
    if truncated {
        diagnostics.push(format!("truncated to {} tokens", env.obs_tokens));
    }
    let payload = match payload {
        ToolPayload::Source { id, .. } => ToolPayload::Source { id, text: text.clone() },
        other => other,
    };
    ToolResult { tool, payload, token_estimate: estimate_tokens(&text), text, params: None, hits: Vec::new(), truncated, diagnostics }
}

/// Search Project nodes, expand each along outgoing CONTAINS edges, keep
/// the Code nodes whose own similarity passes the threshold, and return the
/// induced subgraph over the kept code plus the selected projects.
pub fn projects_tool(env: &ToolEnv, query: &str, params: SearchParams) -> Result<ToolResult, ToolError> {
    if params.k == 0 {
        return Err(ToolError::InvalidArgs("k must be at least 1".into()));
    }
    let q = env.embed_query(query)?;
    let hits = search_vector(env.graph, &q, Some(NodeKind::Project), params);
    let mut diags = Vec::new();
    if hits.is_empty() {
        diags.push("no projects matched".to_string());
    }
    let contains = BTreeSet::from([CONTAINS.to_string()]);
    let mut keep: BTreeSet<NodeId> = BTreeSet::new();
    for hit in &hits {
        keep.insert(hit.id.clone());
        for id in env.graph.neighborhood(&hit.id, Direction::Out, Some(&contains), 1)? {
            let Some(node) = env.graph.node(&id) else { continue };
            if node.kind != NodeKind::Code {
                continue;
            }
            if node.embedding.as_deref().is_some_and(|e| cosine(&q, e) >= params.threshold) {
                keep.insert(id);
            }
        }
    }
    let sub = env.graph.induced_subgraph(&keep)?;
    let mut r = subgraph_result(env, ToolName::Projects, sub, diags);
    r.params = Some(params);
    r.hits = hits;
    Ok(r)
}

/// Search Entity nodes and return the induced subgraph over the selected
/// entities plus the sources of their incoming edges.
pub fn entities_tool(env: &ToolEnv, query: &str, params: SearchParams) -> Result<ToolResult, ToolError> {
    if env.graph.nodes_of_kind(NodeKind::Entity).next().is_none() {
        return Err(ToolError::NoEntities);
    }
    if params.k == 0 {
        return Err(ToolError::InvalidArgs("k must be at least 1".into()));
    }
    let q = env.embed_query(query)?;
    let hits = search_vector(env.graph, &q, Some(NodeKind::Entity), params);
    let mut diags = Vec::new();
    if hits.is_empty() {
        diags.push("no entities matched".to_string());
    }
    let mut keep: BTreeSet<NodeId> = BTreeSet::new();
    for hit in &hits {
        keep.insert(hit.id.clone());
        keep.extend(env.graph.in_edges(&hit.id).map(|k| k.src.clone()));
    }
    let sub = env.graph.induced_subgraph(&keep)?;
    let mut r = subgraph_result(env, ToolName::Entities, sub, diags);
    r.params = Some(params);
    r.hits = hits;
    Ok(r)
}

/// Search Code nodes and return the induced subgraph over the selection.
pub fn codes_tool(env: &ToolEnv, query: &str, params: SearchParams) -> Result<ToolResult, ToolError> {
    if params.k == 0 {
        return Err(ToolError::InvalidArgs("k must be at least 1".into()));
    }
    let q = env.embed_query(query)?;
    let hits = search_vector(env.graph, &q, Some(NodeKind::Code), params);
    let mut diags = Vec::new();
    if hits.is_empty() {
        diags.push("no code units matched".to_string());
    }
    let sub = env.graph.induced_subgraph(hits.iter().map(|h| &h.id))?;
    let mut r = subgraph_result(env, ToolName::Codes, sub, diags);
    r.params = Some(params);
    r.hits = hits;
    Ok(r)
}

/// Runs a read-only query. Parse errors come back as an observation.
pub fn graph_query_tool(env: &ToolEnv, query: &str) -> ToolResult {
    match env.graph.execute_query(query) {
        Ok(rows) => text_result(env, ToolName::GraphQuery, render_rows(&rows), ToolPayload::Rows { rows }),
        Err(error) => text_result(env, ToolName::GraphQuery, format!("QUERY ERROR: {error}"), ToolPayload::QueryError { error }),
    }
}

/// The verbatim source of one code unit, truncated to the budget.
pub fn source_tool(env: &ToolEnv, id: &str) -> Result<ToolResult, ToolError> {
    let node = env.graph.get(id).ok_or_else(|| ToolError::UnknownId(id.to_string()))?;
    if node.kind != NodeKind::Code {
        return Err(ToolError::NotACodeNode(id.to_string()));
    }
    let source = node.attr("source").unwrap_or("").to_string();
    Ok(text_result(env, ToolName::Source, source, ToolPayload::Source { id: node.id.clone(), text: String::new() }))
}

/// Dispatches a parsed tool call.
pub fn execute_tool(env: &ToolEnv, call: &ToolCall) -> Result<ToolResult, ToolError> {
    let params = params_from(call, env.search);
    match call.tool {
        ToolName::Projects => projects_tool(env, arg(call, "query")?, params),
        ToolName::Entities => entities_tool(env, arg(call, "query")?, params),
        ToolName::Codes => codes_tool(env, arg(call, "query")?, params),
        ToolName::GraphQuery => Ok(graph_query_tool(env, arg(call, "query")?)),
        ToolName::Source => source_tool(env, arg(call, "id")?),
    }
}

/// A failed tool call turned into an observation the model can react to.
pub fn error_result(env: &ToolEnv, tool: ToolName, error: &ToolError) -> ToolResult {
    let message = error.to_string();
    text_result(env, tool, format!("TOOL ERROR: {message}"), ToolPayload::Error { message })
}
