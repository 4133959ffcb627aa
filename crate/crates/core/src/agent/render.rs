use crate::graph::{EdgeKey, Node, QueryRows, Subgraph};

pub const EMPTY_RESULT: &str = "(empty result)";

/// Up to and including the first `.` followed by whitespace or the end, and
/// never past the first line break.
pub fn first_sentence(text: &str) -> &str {
    let line = text.trim().lines().next().unwrap_or("").trim();
    let bytes = line.as_bytes();
    for (i, b) in bytes.iter().enumerate() {
        if *b == b'.' && bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace()) {
            return &line[..=i];
        }
    }
    line
}

pub fn node_line(node: &Node) -> String {
    match node.description.as_deref().map(first_sentence).filter(|d| !d.is_empty()) {
        Some(d) => format!("[{}] {}: {} — {}", node.kind.as_str(), node.id, node.name, d),
        None => format!("[{}] {}: {}", node.kind.as_str(), node.id, node.name),
    }
}

pub fn edge_line(key: &EdgeKey) -> String {
    format!("{} -{}-> {}", key.src, key.label.as_str(), key.dst)
}

/// Node lines sorted by (kind, id), then edge lines sorted by
/// (src, label, dst). Each entry carries what it renders.
pub(crate) fn subgraph_lines(sub: &Subgraph) -> Vec<(String, Option<&Node>, Option<&EdgeKey>)> {
    let mut nodes: Vec<&Node> = sub.nodes().collect();
    nodes.sort_by(|a, b| (a.kind, &a.id).cmp(&(b.kind, &b.id)));
    let mut out: Vec<(String, Option<&Node>, Option<&EdgeKey>)> = nodes.into_iter().map(|n| (node_line(n), Some(n), None)).collect();
    // Subgraph edges are already in (src, label, dst) order.
    out.extend(sub.edges().map(|(k, _)| (edge_line(k), None, Some(k))));
    out
}

pub fn render_subgraph(sub: &Subgraph) -> String {
    if sub.is_empty() {
        return EMPTY_RESULT.to_string();
    }
    subgraph_lines(sub).into_iter().map(|(l, _, _)| l).collect::<Vec<_>>().join("\n")
}

/// `COUNT n`, `0 rows`, or a `n rows: a, b` header followed by one
/// comma-separated line per row.
pub fn render_rows(rows: &QueryRows) -> String {
    match rows {
        QueryRows::Count { count } => format!("COUNT {count}"),
        QueryRows::Rows { rows, .. } if rows.is_empty() => "0 rows".to_string(),
        QueryRows::Rows { columns, rows } => {
            let mut out = format!("{} rows: {}", rows.len(), columns.join(", "));
            for row in rows {
                out.push('\n');
                out.push_str(&row.iter().map(|id| id.as_str()).collect::<Vec<_>>().join(","));
            }
            out
        }
    }
}
