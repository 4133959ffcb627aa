use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::graph::{is_valid_label, CodeGraph, Edge, GraphError, Label, Node, NodeId, NodeKind, CONTAINS, RELATES_TO, REPRESENTS, RESERVED_LABELS};
use crate::provider::{with_retries, LlmProvider, ProviderError, Tier};
use crate::templates::{self, render};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Operation {
    #[serde(rename = "codeUid")]
    pub code_uid: String,
    pub verb: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedEntity {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub operations: Vec<Operation>,
    #[serde(default, rename = "representedBy")]
    pub represented_by: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityExtraction {
    pub entities: Vec<ExtractedEntity>,
}

/// Trim, collapse whitespace, drop a naive plural `s` from the last word,
/// title-case every word.
pub fn normalize_entity_name(raw: &str) -> String {
    let mut words: Vec<String> = raw.split_whitespace().map(str::to_string).collect();
    if let Some(last) = words.last_mut() {
        let lower = last.to_lowercase();
        if lower.len() > 3 && lower.ends_with('s') && !lower.ends_with("ss") {
            last.pop();
        }
    }
    words
        .iter()
        .map(|w| {
            let mut cs = w.chars();
            match cs.next() {
                Some(f) => f.to_uppercase().chain(cs.flat_map(char::to_lowercase)).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<String>>()
        .join(" ")
}

fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let rest = rest.split_once('\n').map_or("", |(_, r)| r);
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

/// Parses and validates a provider reply against the code ids in `known`.
/// Structural errors fail; bad verbs, unknown ids and unnamed entities are
/// dropped with diagnostics. Entities sharing a normalized name are merged.
pub fn parse_extraction(text: &str, known: &BTreeSet<String>) -> Result<(EntityExtraction, Vec<String>), String> {
    let value: Value = serde_json::from_str(strip_fence(text)).map_err(|e| format!("invalid JSON: {e}"))?;
    let raw: EntityExtraction = serde_json::from_value(value).map_err(|e| format!("JSON does not match the required shape: {e}"))?;
    let mut diags = Vec::new();
    let mut out: BTreeMap<String, ExtractedEntity> = BTreeMap::new();
    for e in raw.entities {
        let name = normalize_entity_name(&e.name);
        if name.is_empty() {
            diags.push("entity without a name dropped".to_string());
            continue;
        }
        let mut ops = Vec::new();
        for op in e.operations {
            if !is_valid_label(&op.verb) || RESERVED_LABELS.contains(&op.verb.as_str()) {
                diags.push(format!("{name}: verb {:?} dropped", op.verb));
            } else if !known.contains(&op.code_uid) {
                diags.push(format!("{name}: unknown code id {:?} dropped", op.code_uid));
            } else {
                ops.push(op);
            }
        }
        let mut reps = Vec::new();
        for r in e.represented_by {
            if known.contains(&r) {
                reps.push(r);
            } else {
                diags.push(format!("{name}: unknown code id {r:?} dropped"));
            }
        }
        let slot = out.entry(name.clone()).or_insert_with(|| ExtractedEntity { name, ..Default::default() });
        merge_into(slot, e.description.trim(), ops, reps);
    }
    Ok((EntityExtraction { entities: out.into_values().collect() }, diags))
}

fn merge_into(slot: &mut ExtractedEntity, description: &str, ops: Vec<Operation>, reps: Vec<String>) {
    if !description.is_empty() && !slot.description.split('\n').any(|d| d == description) {
        if !slot.description.is_empty() {
            slot.description.push('\n');
        }
        slot.description.push_str(description);
    }
    slot.operations.extend(ops);
    slot.operations.sort();
    slot.operations.dedup();
    slot.represented_by.extend(reps);
    slot.represented_by.sort();
    slot.represented_by.dedup();
}

fn code_children<'a>(graph: &'a CodeGraph, project: &NodeId) -> Vec<&'a Node> {
    let mut kids: Vec<&Node> = graph
        .out_edges(project)
        .filter(|k| k.label.as_str() == CONTAINS)
        .filter_map(|k| graph.node(&k.dst))
        .filter(|n| n.kind == NodeKind::Code)
        .collect();
    kids.sort_by(|a, b| a.id.cmp(&b.id));
    kids
}

pub fn extract_entities_prompt(graph: &CodeGraph, project: &NodeId) -> Option<String> {
    let kids = code_children(graph, project);
    if kids.is_empty() {
        return None;
    }
    let lines: Vec<String> = kids
        .iter()
        .map(|n| {
            let d = n.description.as_deref().unwrap_or("(no description)");
            format!("- {} | {} | {}", n.id, n.name, d.split_whitespace().collect::<Vec<_>>().join(" "))
        })
        .collect();
    let name = graph.node(project).map_or("", |n| n.name.as_str());
    Some(render(templates::EXTRACT_ENTITIES, &[("project", name), ("units", &lines.join("\n"))]))
}

/// One deep-tier call per project. Replies that fail to parse are re-asked
/// up to twice with the parse error; after that the extraction is empty.
pub fn extract_entities(
    graph: &CodeGraph,
    project: &NodeId,
    provider: &dyn LlmProvider,
    retries: usize,
) -> Result<(EntityExtraction, Vec<String>), ProviderError> {
    let Some(prompt) = extract_entities_prompt(graph, project) else {
        return Ok((EntityExtraction::default(), Vec::new()));
    };
    let known: BTreeSet<String> = graph.nodes_of_kind(NodeKind::Code).map(|n| n.id.to_string()).collect();
    let mut reply = with_retries(retries, || provider.complete(&prompt, Tier::Deep))?;
    let mut failures = Vec::new();
    for attempt in 0..=2 {
        match parse_extraction(&reply, &known) {
            Ok((ex, mut diags)) => {
                diags.splice(0..0, failures);
                return Ok((ex, diags));
            }
            Err(e) => {
                failures.push(format!("malformed extraction (attempt {}): {e}", attempt + 1));
                if attempt == 2 {
                    break;
                }
                let repair = render(templates::REPAIR_JSON, &[("error", &e), ("request", &prompt), ("reply", &reply)]);
                reply = with_retries(retries, || provider.complete(&repair, Tier::Deep))?;
            }
        }
    }
    failures.push("extraction left empty after 2 repair attempts".to_string());
    Ok((EntityExtraction::default(), failures))
}

/// Unions per-project extractions by normalized name. Descriptions are
/// joined in input order without repeats.
pub fn merge_entities(per_project: Vec<EntityExtraction>) -> Vec<ExtractedEntity> {
    let mut out: BTreeMap<String, ExtractedEntity> = BTreeMap::new();
    for ex in per_project {
        for e in ex.entities {
            let name = normalize_entity_name(&e.name);
            let slot = out.entry(name.clone()).or_insert_with(|| ExtractedEntity { name, ..Default::default() });
            for d in e.description.split('\n') {
                merge_into(slot, d.trim(), Vec::new(), Vec::new());
            }
            merge_into(slot, "", e.operations, e.represented_by);
        }
    }
    out.into_values().collect()
}

/// Adds Entity nodes, verb and REPRESENTS edges from code, and RELATES_TO
/// edges to every project holding code linked to the entity. Re-applying
/// the same entities leaves the graph unchanged.
pub fn apply_semantic_layer(graph: &mut CodeGraph, entities: &[ExtractedEntity]) -> Result<(), GraphError> {
    let relates = Label::new(RELATES_TO)?;
    let represents = Label::new(REPRESENTS)?;
    for e in entities {
        let id = NodeId::entity(&e.name);
        if !graph.contains_node(&id) {
            let mut node = Node::new(id.clone(), NodeKind::Entity, &e.name);
            if !e.description.is_empty() {
                node.description = Some(e.description.clone());
            }
            graph.add_node(node)?;
        }
        for op in &e.operations {
            graph.add_edge(Edge::new(NodeId::new(&op.code_uid)?, Label::new(&op.verb)?, id.clone()))?;
        }
        for r in &e.represented_by {
            graph.add_edge(Edge::new(NodeId::new(r)?, represents.clone(), id.clone()))?;
        }
    }
    // RELATES_TO is derived from the edges actually present.
    let entity_ids: Vec<NodeId> = graph.nodes_of_kind(NodeKind::Entity).map(|n| n.id.clone()).collect();
    for id in entity_ids {
        let projects: BTreeSet<NodeId> = graph
            .in_edges(&id)
            .filter_map(|k| graph.node(&k.src))
            .filter(|n| n.kind == NodeKind::Code)
            .filter_map(|n| graph.project_of(&n.id).cloned())
            .collect();
        for p in projects {
            graph.add_edge(Edge::new(id.clone(), relates.clone(), p))?;
        }
    }
    Ok(())
}
