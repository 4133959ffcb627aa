//! A small read-only path query language.
//!
//! ```text
//! query     := "MATCH" pattern "RETURN" retclause
//! pattern   := nodepat (edgepat nodepat)?
//! nodepat   := "(" var (":" kind)? ("{" key ":" qstring ("," key ":" qstring)* "}")? ")"
//! edgepat   := "-[" (":" label ("|" label)*)? ("*" int ".." int)? "]->"
//! retclause := "COUNT" | var ("," var)*
//! ```
//!
//! Variable-length edges match when the end node is reachable by a walk whose
//! length lies in the range. Rows are distinct and sorted by id tuple; COUNT
//! is the number of distinct pattern bindings.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CodeGraph, Node, NodeId, NodeKind};

pub const MAX_DEPTH: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum QueryError {
    #[error("parse error at {position}: expected {}, found {found}", expected.join(" | "))]
    Parse {
        position: usize,
        expected: Vec<String>,
        found: String,
    },
}

impl QueryError {
    pub fn position(&self) -> usize {
        match self {
            QueryError::Parse { position, .. } => *position,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePattern {
    pub var: String,
    pub kind: Option<NodeKind>,
    pub filters: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgePattern {
    /// Empty means any label.
    pub labels: Vec<String>,
    pub min_depth: u32,
    pub max_depth: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReturnClause {
    Count,
    Vars(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphQuery {
    pub start: NodePattern,
    pub step: Option<(EdgePattern, NodePattern)>,
    pub ret: ReturnClause,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QueryRows {
    Rows { columns: Vec<String>, rows: Vec<Vec<NodeId>> },
    Count { count: usize },
}

impl QueryRows {
    pub fn len(&self) -> usize {
        match self {
            QueryRows::Rows { rows, .. } => rows.len(),
            QueryRows::Count { .. } => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for QueryRows {
    /// One line per row with comma-separated ids, or the bare count.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryRows::Count { count } => writeln!(f, "{count}"),
            QueryRows::Rows { rows, .. } => {
                for row in rows {
                    let cells: Vec<&str> = row.iter().map(NodeId::as_str).collect();
                    writeln!(f, "{}", cells.join(","))?;
                }
                Ok(())
            }
        }
    }
}

pub fn parse_query(text: &str) -> Result<GraphQuery, QueryError> {
    let mut p = Parser { src: text, pos: 0 };
    let q = p.query()?;
    p.skip_ws();
    if p.pos != text.len() {
        return Err(p.error(&["end of input"]));
    }
    Ok(q)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn error(&self, expected: &[&str]) -> QueryError {
        let found = match self.rest().chars().next() {
            None => "end of input".to_string(),
            Some(_) => {
                let snippet: String = self.rest().chars().take(12).collect();
                format!("{snippet:?}")
            }
        };
        QueryError::Parse {
            position: self.pos,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        }
    }

    fn peek_symbol(&mut self, sym: &str) -> bool {
        self.skip_ws();
        self.rest().starts_with(sym)
    }

    fn eat_symbol(&mut self, sym: &str) -> bool {
        if self.peek_symbol(sym) {
            self.pos += sym.len();
            true
        } else {
            false
        }
    }

    fn expect_symbol(&mut self, sym: &str) -> Result<(), QueryError> {
        if self.eat_symbol(sym) {
            Ok(())
        } else {
            Err(self.error(&[&format!("{sym:?}")]))
        }
    }

    fn peek_ident(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let rest = self.rest();
        let mut end = 0;
        for (i, c) in rest.char_indices() {
            let ok = if i == 0 { c.is_ascii_alphabetic() || c == '_' } else { c.is_ascii_alphanumeric() || c == '_' };
            if !ok {
                break;
            }
            end = i + c.len_utf8();
        }
        (end > 0).then(|| &rest[..end])
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize), QueryError> {
        match self.peek_ident() {
            Some(id) => {
                let at = self.pos;
                self.pos += id.len();
                Ok((id.to_string(), at))
            }
            None => Err(self.error(&[what])),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.peek_ident() == Some(kw) {
            self.pos += kw.len();
            Ok(())
        } else {
            Err(self.error(&[&format!("{kw:?}")]))
        }
    }

    fn int(&mut self) -> Result<u32, QueryError> {
        self.skip_ws();
        let digits: String = self.rest().chars().take_while(|c| c.is_ascii_digit()).collect();
        if digits.is_empty() {
            return Err(self.error(&["integer"]));
        }
        let value = digits.parse::<u32>().map_err(|_| self.error(&["integer"]))?;
        self.pos += digits.len();
        Ok(value)
    }

    fn string(&mut self) -> Result<String, QueryError> {
        self.skip_ws();
        if !self.rest().starts_with('"') {
            return Err(self.error(&["quoted string"]));
        }
        let start = self.pos;
        let mut out = String::new();
        let mut chars = self.rest().char_indices().skip(1);
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.pos += i + 1;
                    return Ok(out);
                }
                '\\' => match chars.next() {
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, 't')) => out.push('\t'),
                    Some((_, other)) => out.push(other),
                    None => break,
                },
                other => out.push(other),
            }
        }
        self.pos = self.src.len();
        Err(QueryError::Parse {
            position: start,
            expected: vec!["closing '\"'".into()],
            found: "unterminated string".into(),
        })
    }

    fn query(&mut self) -> Result<GraphQuery, QueryError> {
        self.keyword("MATCH")?;
        let start = self.node_pattern()?;
        let step = if self.peek_symbol("-[") {
            let edge = self.edge_pattern()?;
            let end = self.node_pattern()?;
            Some((edge, end))
        } else {
            None
        };
        if self.peek_ident() != Some("RETURN") {
            let expected: &[&str] = if step.is_none() { &["\"-[\"", "\"RETURN\""] } else { &["\"RETURN\""] };
            return Err(self.error(expected));
        }
        self.keyword("RETURN")?;
        let ret = self.return_clause(&start, step.as_ref().map(|(_, n)| n))?;
        Ok(GraphQuery { start, step, ret })
    }

    fn node_pattern(&mut self) -> Result<NodePattern, QueryError> {
        self.expect_symbol("(")?;
        let (var, _) = self.ident("variable")?;
        let mut kind = None;
        if self.eat_symbol(":") {
            self.skip_ws();
            let at = self.pos;
            let (name, _) = self.ident("node kind")?;
            kind = Some(NodeKind::parse(&name).ok_or_else(|| {
                self.pos = at;
                self.error(&["\"System\"", "\"Project\"", "\"Code\"", "\"Entity\""])
            })?);
        }
        let mut filters = Vec::new();
        if self.eat_symbol("{") {
            loop {
                let (key, _) = self.ident("property key")?;
                self.expect_symbol(":")?;
                let value = self.string()?;
                filters.push((key, value));
                if self.eat_symbol(",") {
                    continue;
                }
                if self.eat_symbol("}") {
                    break;
                }
                return Err(self.error(&["\",\"", "\"}\""]));
            }
        }
        if !self.eat_symbol(")") {
            let expected: &[&str] = match (kind.is_some(), filters.is_empty()) {
                (false, true) => &["\":\"", "\"{\"", "\")\""],
                (true, true) => &["\"{\"", "\")\""],
                _ => &["\")\""],
            };
            return Err(self.error(expected));
        }
        Ok(NodePattern { var, kind, filters })
    }

    fn edge_pattern(&mut self) -> Result<EdgePattern, QueryError> {
        self.expect_symbol("-[")?;
        let mut labels = Vec::new();
        if self.eat_symbol(":") {
            loop {
                let (label, _) = self.ident("edge label")?;
                labels.push(label);
                if !self.eat_symbol("|") {
                    break;
                }
            }
        }
        let (mut min_depth, mut max_depth) = (1, 1);
        if self.eat_symbol("*") {
            self.skip_ws();
            let at = self.pos;
            min_depth = self.int()?;
            self.expect_symbol("..")?;
            max_depth = self.int()?;
            if !(1 <= min_depth && min_depth <= max_depth && max_depth <= MAX_DEPTH) {
                return Err(QueryError::Parse {
                    position: at,
                    expected: vec![format!("depth range with 1 <= lo <= hi <= {MAX_DEPTH}")],
                    found: format!("{min_depth}..{max_depth}"),
                });
            }
        }
        if !self.eat_symbol("]->") {
            return Err(self.error(&["\"]->\""]));
        }
        Ok(EdgePattern { labels, min_depth, max_depth })
    }

    fn return_clause(&mut self, start: &NodePattern, end: Option<&NodePattern>) -> Result<ReturnClause, QueryError> {
        if self.peek_ident() == Some("COUNT") {
            self.pos += "COUNT".len();
            return Ok(ReturnClause::Count);
        }
        let declared: Vec<&str> = std::iter::once(start.var.as_str()).chain(end.map(|n| n.var.as_str())).collect();
        let mut vars = Vec::new();
        loop {
            self.skip_ws();
            let at = self.pos;
            let (var, _) = self.ident("\"COUNT\" or variable")?;
            if !declared.contains(&var.as_str()) {
                self.pos = at;
                let expected: Vec<String> = declared.iter().map(|v| format!("{v:?}")).collect();
                let expected: Vec<&str> = expected.iter().map(String::as_str).collect();
                return Err(self.error(&expected));
            }
            vars.push(var);
            if !self.eat_symbol(",") {
                break;
            }
        }
        Ok(ReturnClause::Vars(vars))
    }
}

impl NodePattern {
    pub fn matches(&self, node: &Node) -> bool {
        if self.kind.is_some_and(|k| k != node.kind) {
            return false;
        }
        self.filters.iter().all(|(key, value)| match key.as_str() {
            "name" => node.name == *value,
            "kind" => node.kind.as_str() == value,
            other => node.attr(other) == Some(value.as_str()),
        })
    }
}

impl GraphQuery {
    /// Distinct (start, end) bindings; for single-node patterns end == start.
    fn bindings<'g>(&self, graph: &'g CodeGraph) -> BTreeSet<(&'g NodeId, &'g NodeId)> {
        let starts = graph.nodes().filter(|n| self.start.matches(n));
        let mut out = BTreeSet::new();
        match &self.step {
            None => out.extend(starts.map(|n| (&n.id, &n.id))),
            Some((edge, end)) => {
                for a in starts {
                    for b in reachable(graph, &a.id, edge) {
                        let node = graph.node(b).expect("adjacency points at live nodes");
                        if !end.matches(node) {
                            continue;
                        }
                        if end.var == self.start.var && b != &a.id {
                            continue;
                        }
                        out.insert((&a.id, b));
                    }
                }
            }
        }
        out
    }

    pub fn execute(&self, graph: &CodeGraph) -> QueryRows {
        let bindings = self.bindings(graph);
        match &self.ret {
            ReturnClause::Count => QueryRows::Count { count: bindings.len() },
            ReturnClause::Vars(vars) => {
                let rows: BTreeSet<Vec<NodeId>> = bindings
                    .iter()
                    .map(|(a, b)| {
                        vars.iter()
                            .map(|v| if *v == self.start.var { (*a).clone() } else { (*b).clone() })
                            .collect()
                    })
                    .collect();
                QueryRows::Rows { columns: vars.clone(), rows: rows.into_iter().collect() }
            }
        }
    }
}

fn reachable<'g>(graph: &'g CodeGraph, start: &'g NodeId, edge: &EdgePattern) -> BTreeSet<&'g NodeId> {
    let mut frontier: BTreeSet<&NodeId> = BTreeSet::from([start]);
    let mut hits = BTreeSet::new();
    for depth in 1..=edge.max_depth {
        let mut next = BTreeSet::new();
        for id in &frontier {
            for key in graph.out_edges(id) {
                if edge.labels.is_empty() || edge.labels.iter().any(|l| l == key.label.as_str()) {
                    next.insert(&key.dst);
                }
            }
        }
        if depth >= edge.min_depth {
            hits.extend(next.iter().copied());
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    hits
}

impl CodeGraph {
    pub fn execute_query(&self, text: &str) -> Result<QueryRows, QueryError> {
        Ok(parse_query(text)?.execute(self))
    }
}
