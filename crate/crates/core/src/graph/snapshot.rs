//! Line-oriented snapshot container.
//!
//! ```text
//! CLGS <schema_version> <json system name>
//! M <json meta attrs>
//! N <json id> <kind> <json name> <json attrs> <json description | null>
//! E <json src> <label> <json dst> <json attrs>
//! V <json id> <dim> <base64 little-endian f32s>
//! C <crc32 of every preceding byte, 8 lowercase hex digits>
//! ```
//!
//! Node lines come first (id order), then edges ((src, label, dst) order), then
//! embeddings (id order). Identical graphs always produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde_json::Value;
use thiserror::Error;

use super::{Attrs, CodeGraph, Edge, GraphError, Label, Node, NodeId, NodeKind};

pub const SNAPSHOT_MAGIC: &str = "CLGS";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("snapshot schema version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
}

fn json<T: serde::Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

pub fn write_snapshot(graph: &CodeGraph) -> Vec<u8> {
    let mut out = String::new();
    let meta = graph.meta();
    let _ = writeln!(out, "{SNAPSHOT_MAGIC} {} {}", SCHEMA_VERSION, json(&meta.system_name));
    let _ = writeln!(out, "M {}", json(&meta.attrs));
    for node in graph.nodes() {
        let _ = writeln!(
            out,
            "N {} {} {} {} {}",
            json(&node.id),
            node.kind,
            json(&node.name),
            json(&node.attrs),
            json(&node.description)
        );
    }
    for (key, attrs) in graph.edges() {
        let _ = writeln!(out, "E {} {} {} {}", json(&key.src), key.label, json(&key.dst), json(attrs));
    }
    for node in graph.nodes() {
        if let Some(v) = &node.embedding {
            let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
            let _ = writeln!(out, "V {} {} {}", json(&node.id), v.len(), B64.encode(bytes));
        }
    }
    let crc = crc32fast::hash(out.as_bytes());
    let _ = writeln!(out, "C {crc:08x}");
    out.into_bytes()
}

pub fn save_snapshot(graph: &CodeGraph, path: impl AsRef<Path>) -> Result<(), SnapshotError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, write_snapshot(graph))?;
    Ok(())
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<CodeGraph, SnapshotError> {
    let bytes = fs::read(path)?;
    read_snapshot(&bytes)
}

pub fn read_snapshot(bytes: &[u8]) -> Result<CodeGraph, SnapshotError> {
    let corrupt = |msg: &str| SnapshotError::Corrupt(msg.to_string());
    let text = std::str::from_utf8(bytes).map_err(|_| corrupt("not valid UTF-8"))?;

    let header_end = text.find('\n').ok_or_else(|| corrupt("missing header"))?;
    let mut header = Cursor(&text[..header_end]);
    if header.word()? != SNAPSHOT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version: u32 = header.word()?.parse().map_err(|_| corrupt("bad schema version"))?;
    if version != SCHEMA_VERSION {
        return Err(SnapshotError::VersionMismatch { found: version, supported: SCHEMA_VERSION });
    }
    let system_name: String = header.json()?;

    let body = text.strip_suffix('\n').ok_or_else(|| corrupt("truncated (no trailing newline)"))?;
    let crc_start = body.rfind('\n').map_or(0, |i| i + 1);
    let crc_line = &body[crc_start..];
    let expected = crc_line
        .strip_prefix("C ")
        .filter(|h| h.len() == 8 && h.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')))
        .and_then(|h| u32::from_str_radix(h, 16).ok())
        .ok_or_else(|| corrupt("missing checksum"))?;
    if crc32fast::hash(&bytes[..crc_start]) != expected {
        return Err(corrupt("checksum mismatch"));
    }

    let mut graph = CodeGraph::new(system_name);
    let mut dim: Option<usize> = None;
    let graph_err = |e: GraphError| SnapshotError::Corrupt(e.to_string());
    for line in text[header_end + 1..crc_start].lines() {
        let mut c = Cursor(line);
        match c.word()? {
            "M" => graph.meta_mut().attrs = c.json()?,
            "N" => {
                let id: NodeId = c.json()?;
                let kind = NodeKind::parse(c.word()?).ok_or_else(|| corrupt("unknown node kind"))?;
                let name: String = c.json()?;
                let attrs: Attrs = c.json()?;
                let description: Option<String> = c.json()?;
                let node = Node { id, kind, name, description, embedding: None, attrs };
                graph.add_node(node).map_err(graph_err)?;
            }
            "E" => {
                let src: NodeId = c.json()?;
                let label = Label::new(c.word()?).map_err(graph_err)?;
                let dst: NodeId = c.json()?;
                let attrs: Attrs = c.json()?;
                graph.add_edge(Edge { src, dst, label, attrs }).map_err(graph_err)?;
            }
            "V" => {
                let id: NodeId = c.json()?;
                let n: usize = c.word()?.parse().map_err(|_| corrupt("bad embedding dimension"))?;
                let raw = B64.decode(c.word()?).map_err(|_| corrupt("bad embedding encoding"))?;
                if raw.len() != n * 4 || dim.is_some_and(|d| d != n) {
                    return Err(corrupt("embedding dimension mismatch"));
                }
                dim = Some(n);
                let v = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
                graph.set_embedding(&id, v).map_err(graph_err)?;
            }
            other => return Err(SnapshotError::Corrupt(format!("unknown record {other:?}"))),
        }
        if !c.0.trim().is_empty() {
            return Err(corrupt("trailing data in record"));
        }
    }
    Ok(graph)
}

struct Cursor<'a>(&'a str);

impl<'a> Cursor<'a> {
    fn word(&mut self) -> Result<&'a str, SnapshotError> {
        let s = self.0.trim_start_matches(' ');
        let end = s.find(' ').unwrap_or(s.len());
        if end == 0 {
            return Err(SnapshotError::Corrupt("unexpected end of record".into()));
        }
        self.0 = &s[end..];
        Ok(&s[..end])
    }

    fn json<T: serde::de::DeserializeOwned>(&mut self) -> Result<T, SnapshotError> {
        let s = self.0.trim_start_matches(' ');
        let mut stream = serde_json::Deserializer::from_str(s).into_iter::<Value>();
        let value = match stream.next() {
            Some(Ok(v)) => v,
            _ => return Err(SnapshotError::Corrupt("malformed JSON field".into())),
        };
        self.0 = &s[stream.byte_offset()..];
        serde_json::from_value(value).map_err(|e| SnapshotError::Corrupt(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::CONTAINS;

    fn small() -> CodeGraph {
        let mut g = CodeGraph::new("sys with space");
        g.meta_mut().attrs.insert("embedding_dim".into(), "2".into());
        let sys = NodeId::new("sys").unwrap();
        let p = NodeId::new("p \"1\"").unwrap();
        g.add_node(Node::new(sys.clone(), NodeKind::System, "sys").with_description("line\nbreak")).unwrap();
        let mut proj = Node::new(p.clone(), NodeKind::Project, "p 1").with_attr("url", "file:///x y");
        proj.embedding = Some(vec![0.6, 0.8]);
        g.add_node(proj).unwrap();
        g.add_edge(Edge::new(sys, Label::new(CONTAINS).unwrap(), p)).unwrap();
        g
    }

    #[test]
    fn round_trip_is_identity() {
        let g = small();
        let bytes = write_snapshot(&g);
        let back = read_snapshot(&bytes).unwrap();
        assert_eq!(back, g);
        assert_eq!(write_snapshot(&back), bytes);
    }

    #[test]
    fn version_bump_detected() {
        let bytes = write_snapshot(&small());
        let text = String::from_utf8(bytes).unwrap().replacen("CLGS 1 ", "CLGS 2 ", 1);
        assert!(matches!(
            read_snapshot(text.as_bytes()),
            Err(SnapshotError::VersionMismatch { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn truncation_detected() {
        let bytes = write_snapshot(&small());
        for cut in [bytes.len() - 1, bytes.len() - 5, bytes.len() / 2, 10] {
            assert!(
                matches!(read_snapshot(&bytes[..cut]), Err(SnapshotError::Corrupt(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn bit_flip_detected() {
        let mut bytes = write_snapshot(&small());
        let i = bytes.iter().position(|b| *b == b'p').unwrap();
        bytes[i] = b'q';
        assert!(matches!(read_snapshot(&bytes), Err(SnapshotError::Corrupt(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_snapshot("/nonexistent/graph.clgs"), Err(SnapshotError::Io(_))));
    }
}
