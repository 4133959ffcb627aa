//! Typed property graph holding System, Project, Code and Entity nodes.
//!
//! Everything is kept in ordered maps so that iteration order, rendered
//! contexts and snapshot bytes are stable across runs.

mod query;
mod snapshot;
mod subgraph;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use query::{parse_query, EdgePattern, GraphQuery, NodePattern, QueryError, QueryRows, ReturnClause};
pub use snapshot::{load_snapshot, read_snapshot, save_snapshot, write_snapshot, SnapshotError, SCHEMA_VERSION, SNAPSHOT_MAGIC};
pub use subgraph::Subgraph;

pub type Attrs = BTreeMap<String, String>;

/// Labels with a fixed meaning in the schema. Any other well-formed label is
/// a dynamic verb and is only allowed on Code -> Entity edges.
pub const CONTAINS: &str = "CONTAINS";
pub const DEPENDS_ON: &str = "DEPENDS_ON";
pub const CALLS: &str = "CALLS";
pub const IMPLEMENTS: &str = "IMPLEMENTS";
pub const REPRESENTS: &str = "REPRESENTS";
pub const RELATES_TO: &str = "RELATES_TO";

pub const RESERVED_LABELS: [&str; 6] = [CONTAINS, DEPENDS_ON, CALLS, IMPLEMENTS, REPRESENTS, RELATES_TO];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(value: impl Into<String>) -> Result<Self, GraphError> {
        let value = value.into();
        if value.is_empty() {
            return Err(GraphError::EmptyId);
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn system(name: &str) -> Self {
        Self(format!("system:{name}"))
    }

    pub fn project(name: &str) -> Self {
        Self(format!("project:{name}"))
    }

    /// Entity ids use the normalized entity name.
    pub fn entity(name: &str) -> Self {
        Self(format!("entity:{name}"))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for NodeId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    System,
    Project,
    Code,
    Entity,
}

impl NodeKind {
    pub const ALL: [NodeKind; 4] = [NodeKind::System, NodeKind::Project, NodeKind::Code, NodeKind::Entity];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::System => "System",
            NodeKind::Project => "Project",
            NodeKind::Code => "Code",
            NodeKind::Entity => "Entity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Edge label: `[A-Z][A-Z_]*`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Label(String);

impl Label {
    pub fn new(value: impl Into<String>) -> Result<Self, GraphError> {
        let value = value.into();
        if is_valid_label(&value) {
            Ok(Self(value))
        } else {
            Err(GraphError::SchemaViolation(format!("malformed label {value:?}")))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_reserved(&self) -> bool {
        RESERVED_LABELS.contains(&self.0.as_str())
    }
}

impl TryFrom<String> for Label {
    type Error = GraphError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Label::new(value)
    }
}

impl From<Label> for String {
    fn from(label: Label) -> Self {
        label.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn is_valid_label(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_uppercase() || c == '_')
}

/// The kind-compatibility table. Total over every (kind, label, kind) triple.
pub fn schema_allows(src: NodeKind, label: &str, dst: NodeKind) -> bool {
    if !is_valid_label(label) {
        return false;
    }
    use NodeKind::*;
    match (src, dst) {
        (System, Project) | (Project, Code) => label == CONTAINS,
        (Code, Code) => matches!(label, DEPENDS_ON | CALLS | IMPLEMENTS),
        (Code, Entity) => label == REPRESENTS || !RESERVED_LABELS.contains(&label),
        (Entity, Project) => label == RELATES_TO,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
    #[serde(default)]
    pub attrs: Attrs,
}

impl Node {
    pub fn new(id: NodeId, kind: NodeKind, name: impl Into<String>) -> Self {
        Self {
            id,
            kind,
            name: name.into(),
            description: None,
            embedding: None,
            attrs: Attrs::new(),
        }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attrs.insert(key.into(), value.into());
        self
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).map(String::as_str)
    }
}

/// Identity of an edge. Ordering is (src, label, dst).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeKey {
    pub src: NodeId,
    pub label: Label,
    pub dst: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub label: Label,
    #[serde(default)]
    pub attrs: Attrs,
}

impl Edge {
    pub fn new(src: NodeId, label: Label, dst: NodeId) -> Self {
        Self { src, dst, label, attrs: Attrs::new() }
    }

    pub fn key(&self) -> EdgeKey {
        EdgeKey { src: self.src.clone(), label: self.label.clone(), dst: self.dst.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("node id must not be empty")]
    EmptyId,
    #[error("duplicate node id {0}")]
    DuplicateId(NodeId),
    #[error("unknown node {0}")]
    UnknownId(NodeId),
    #[error("edge endpoint {0} does not exist")]
    UnknownEndpoint(NodeId),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub system_name: String,
    pub schema_version: u32,
    /// Build bookkeeping (timestamps, template hash, embedding provider and dimension).
    #[serde(default)]
    pub attrs: Attrs,
}

/// Directed labeled property multigraph. At most one edge per (src, label, dst).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CodeGraph {
    meta: GraphMeta,
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeKey, Attrs>,
    out: BTreeMap<NodeId, BTreeSet<EdgeKey>>,
    inc: BTreeMap<NodeId, BTreeSet<EdgeKey>>,
}

impl CodeGraph {
    pub fn new(system_name: impl Into<String>) -> Self {
        Self {
            meta: GraphMeta {
                system_name: system_name.into(),
                schema_version: SCHEMA_VERSION,
                attrs: Attrs::new(),
            },
            ..Default::default()
        }
    }

    pub fn meta(&self) -> &GraphMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut GraphMeta {
        &mut self.meta
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn add_node(&mut self, node: Node) -> Result<NodeId, GraphError> {
        if node.id.as_str().is_empty() {
            return Err(GraphError::EmptyId);
        }
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateId(node.id));
        }
        if node.kind == NodeKind::System && self.system_id().is_some() {
            return Err(GraphError::SchemaViolation("graph already has a System node".into()));
        }
        if let Some(v) = &node.embedding {
            check_unit_norm(v)?;
        }
        let id = node.id.clone();
        self.nodes.insert(id.clone(), node);
        Ok(id)
    }

    /// Inserts an edge. Re-adding an existing (src, label, dst) is a no-op and
    /// keeps the attrs of the first insertion.
    pub fn add_edge(&mut self, edge: Edge) -> Result<(), GraphError> {
        let src = self.nodes.get(&edge.src).ok_or_else(|| GraphError::UnknownEndpoint(edge.src.clone()))?;
        let dst = self.nodes.get(&edge.dst).ok_or_else(|| GraphError::UnknownEndpoint(edge.dst.clone()))?;
        if !schema_allows(src.kind, edge.label.as_str(), dst.kind) {
            return Err(GraphError::SchemaViolation(format!(
                "({})-[:{}]->({}) is not permitted",
                src.kind, edge.label, dst.kind
            )));
        }
        let key = edge.key();
        if self.edges.contains_key(&key) {
            return Ok(());
        }
        if edge.label.as_str() == CONTAINS && self.parent(&edge.dst).is_some() {
            return Err(GraphError::SchemaViolation(format!("{} already has a CONTAINS parent", edge.dst)));
        }
        self.out.entry(key.src.clone()).or_default().insert(key.clone());
        self.inc.entry(key.dst.clone()).or_default().insert(key.clone());
        self.edges.insert(key, edge.attrs);
        Ok(())
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn get(&self, id: &str) -> Option<&Node> {
        self.nodes.get(&NodeId(id.to_string()))
    }

    pub fn contains_node(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(move |n| n.kind == kind)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&EdgeKey, &Attrs)> {
        self.edges.iter()
    }

    pub fn has_edge(&self, src: &str, label: &str, dst: &str) -> bool {
        match Label::new(label) {
            Ok(label) => self.edges.contains_key(&EdgeKey {
                src: NodeId(src.to_string()),
                label,
                dst: NodeId(dst.to_string()),
            }),
            Err(_) => false,
        }
    }

    pub fn edge_attrs(&self, key: &EdgeKey) -> Option<&Attrs> {
        self.edges.get(key)
    }

    pub fn out_edges(&self, id: &NodeId) -> impl Iterator<Item = &EdgeKey> {
        self.out.get(id).into_iter().flatten()
    }

    pub fn in_edges(&self, id: &NodeId) -> impl Iterator<Item = &EdgeKey> {
        self.inc.get(id).into_iter().flatten()
    }

    pub fn system_id(&self) -> Option<&NodeId> {
        self.nodes.values().find(|n| n.kind == NodeKind::System).map(|n| &n.id)
    }

    /// The CONTAINS parent of a node, if any.
    pub fn parent(&self, id: &NodeId) -> Option<&NodeId> {
        self.in_edges(id).find(|k| k.label.as_str() == CONTAINS).map(|k| &k.src)
    }

    /// Project owning a Code node.
    pub fn project_of(&self, code: &NodeId) -> Option<&NodeId> {
        let parent = self.parent(code)?;
        (self.nodes.get(parent)?.kind == NodeKind::Project).then_some(parent)
    }

    pub fn set_description(&mut self, id: &NodeId, description: impl Into<String>) -> Result<(), GraphError> {
        let node = self.nodes.get_mut(id).ok_or_else(|| GraphError::UnknownId(id.clone()))?;
        node.description = Some(description.into());
        Ok(())
    }

    pub fn set_embedding(&mut self, id: &NodeId, embedding: Vec<f32>) -> Result<(), GraphError> {
        check_unit_norm(&embedding)?;
        let node = self.nodes.get_mut(id).ok_or_else(|| GraphError::UnknownId(id.clone()))?;
        node.embedding = Some(embedding);
        Ok(())
    }

    pub fn set_attr(&mut self, id: &NodeId, key: impl Into<String>, value: impl Into<String>) -> Result<(), GraphError> {
        let node = self.nodes.get_mut(id).ok_or_else(|| GraphError::UnknownId(id.clone()))?;
        node.attrs.insert(key.into(), value.into());
        Ok(())
    }

    /// Nodes reachable from `id` within `depth` hops, following edges in the
    /// given direction and (optionally) only with the given labels. The seed
    /// itself is included only when some path leads back to it.
    pub fn neighborhood(
        &self,
        id: &NodeId,
        direction: Direction,
        labels: Option<&BTreeSet<String>>,
        depth: usize,
    ) -> Result<BTreeSet<NodeId>, GraphError> {
        if !self.nodes.contains_key(id) {
            return Err(GraphError::UnknownId(id.clone()));
        }
        if depth == 0 {
            return Err(GraphError::InvalidArgument("depth must be at least 1".into()));
        }
        let keep = |k: &EdgeKey| labels.is_none_or(|set| set.contains(k.label.as_str()));
        let mut found = BTreeSet::new();
        let mut seen = BTreeSet::from([id.clone()]);
        let mut queue = VecDeque::from([(id.clone(), 0usize)]);
        while let Some((current, d)) = queue.pop_front() {
            if d == depth {
                continue;
            }
            let mut next = Vec::new();
            if matches!(direction, Direction::Out | Direction::Both) {
                next.extend(self.out_edges(&current).filter(|k| keep(k)).map(|k| k.dst.clone()));
            }
            if matches!(direction, Direction::In | Direction::Both) {
                next.extend(self.in_edges(&current).filter(|k| keep(k)).map(|k| k.src.clone()));
            }
            for n in next {
                found.insert(n.clone());
                if seen.insert(n.clone()) {
                    queue.push_back((n, d + 1));
                }
            }
        }
        Ok(found)
    }

    /// Read-only view of the given nodes and every edge between them.
    pub fn induced_subgraph<'a, I>(&self, ids: I) -> Result<Subgraph, GraphError>
    where
        I: IntoIterator<Item = &'a NodeId>,
    {
        let mut nodes = BTreeMap::new();
        for id in ids {
            let node = self.nodes.get(id).ok_or_else(|| GraphError::UnknownId(id.clone()))?;
            nodes.insert(id.clone(), node.clone());
        }
        let mut edges = BTreeMap::new();
        for id in nodes.keys() {
            for key in self.out_edges(id) {
                if nodes.contains_key(&key.dst) {
                    edges.insert(key.clone(), self.edges[key].clone());
                }
            }
        }
        Ok(Subgraph::from_parts(nodes, edges))
    }

    /// Checks every whole-graph invariant and returns the list of violations.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let systems: Vec<_> = self.nodes_of_kind(NodeKind::System).collect();
        if systems.len() != 1 {
            problems.push(format!("expected exactly one System node, found {}", systems.len()));
        }
        for (key, _) in self.edges() {
            let (Some(s), Some(d)) = (self.nodes.get(&key.src), self.nodes.get(&key.dst)) else {
                problems.push(format!("dangling edge {} -{}-> {}", key.src, key.label, key.dst));
                continue;
            };
            if !schema_allows(s.kind, key.label.as_str(), d.kind) {
                problems.push(format!("schema violation {} -{}-> {}", key.src, key.label, key.dst));
            }
        }
        for node in self.nodes.values() {
            if let Some(v) = &node.embedding {
                if let Err(e) = check_unit_norm(v) {
                    problems.push(format!("{}: {e}", node.id));
                }
            }
            match node.kind {
                NodeKind::Project => match self.parent(&node.id) {
                    Some(p) if self.nodes[p].kind == NodeKind::System => {}
                    _ => problems.push(format!("project {} is not contained by the System node", node.id)),
                },
                NodeKind::Code => {
                    let parents: Vec<_> = self.in_edges(&node.id).filter(|k| k.label.as_str() == CONTAINS).collect();
                    if parents.len() != 1 {
                        problems.push(format!("code node {} has {} CONTAINS parents", node.id, parents.len()));
                    }
                    if node.attr("file").is_none_or(str::is_empty) || node.attr("span").is_none_or(str::is_empty) {
                        problems.push(format!("code node {} lacks file/span attrs", node.id));
                    }
                }
                _ => {}
            }
        }
        problems
    }
}

fn check_unit_norm(v: &[f32]) -> Result<(), GraphError> {
    let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(GraphError::InvalidArgument(format!("embedding norm {norm} is not 1")));
    }
    Ok(())
}
