use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Attrs, Edge, EdgeKey, Node, NodeId};

/// Read-only node/edge set cut out of a [`CodeGraph`](super::CodeGraph).
///
/// Serializes as `{"nodes": [...], "edges": [...]}` with nodes ordered by id
/// and edges by (src, label, dst).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Subgraph {
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeKey, Attrs>,
}

impl Subgraph {
    pub(super) fn from_parts(nodes: BTreeMap<NodeId, Node>, edges: BTreeMap<EdgeKey, Attrs>) -> Self {
        Self { nodes, edges }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.keys().any(|k| k.as_str() == id)
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&EdgeKey, &Attrs)> {
        self.edges.iter()
    }

    /// Keeps the nodes passing `keep_node` and the edges passing `keep_edge`
    /// whose endpoints both survive.
    pub fn filtered(&self, keep_node: impl Fn(&Node) -> bool, keep_edge: impl Fn(&EdgeKey) -> bool) -> Subgraph {
        let nodes: BTreeMap<NodeId, Node> =
            self.nodes.iter().filter(|(_, n)| keep_node(n)).map(|(k, n)| (k.clone(), n.clone())).collect();
        let edges = self
            .edges
            .iter()
            .filter(|(k, _)| nodes.contains_key(&k.src) && nodes.contains_key(&k.dst) && keep_edge(k))
            .map(|(k, a)| (k.clone(), a.clone()))
            .collect();
        Self { nodes, edges }
    }

    /// Drops an attribute and the embedding from every node.
    pub fn without_node_attr(mut self, key: &str) -> Subgraph {
        for n in self.nodes.values_mut() {
            n.attrs.remove(key);
            n.embedding = None;
        }
        self
    }

    pub fn has_edge(&self, src: &str, label: &str, dst: &str) -> bool {
        self.edges
            .keys()
            .any(|k| k.src.as_str() == src && k.label.as_str() == label && k.dst.as_str() == dst)
    }
}

#[derive(Serialize, Deserialize)]
struct SubgraphRepr {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl Serialize for Subgraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let repr = SubgraphRepr {
            nodes: self
                .nodes
                .values()
                .map(|n| Node { embedding: None, ..n.clone() })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|(k, a)| Edge { src: k.src.clone(), dst: k.dst.clone(), label: k.label.clone(), attrs: a.clone() })
                .collect(),
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Subgraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = SubgraphRepr::deserialize(deserializer)?;
        let nodes = repr.nodes.into_iter().map(|n| (n.id.clone(), n)).collect();
        let edges = repr.edges.into_iter().map(|e| (e.key(), e.attrs)).collect();
        Ok(Self { nodes, edges })
    }
}
