//! Structural extraction: repository traversal, per-language parsing into
//! code units and raw relations, cross-repository reference resolution and
//! assembly of the structural graph.

mod build;
mod facts;
mod java;
mod lex;
mod python;
mod resolve;
mod scan;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use build::{build_structural_graph, ExtractionReport, RepoReport, StructuralBuild};
pub use facts::FactsAdapter;
pub use java::JavaAdapter;
pub use python::PythonAdapter;
pub use resolve::{resolve_references, Resolution};
pub use scan::scan_repository;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoSpec {
    pub name: String,
    pub root: PathBuf,
    /// Adapter key: `java`, `python` or `facts`.
    pub language: String,
    #[serde(default)]
    pub include: Vec<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

impl RepoSpec {
    pub fn new(name: impl Into<String>, root: impl Into<PathBuf>, language: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            root: root.into(),
            language: language.into(),
            include: Vec::new(),
            exclude: Vec::new(),
            url: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Class,
    Interface,
    Function,
    Struct,
    Method,
}

impl UnitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitKind::Class => "class",
            UnitKind::Interface => "interface",
            UnitKind::Function => "function",
            UnitKind::Struct => "struct",
            UnitKind::Method => "method",
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeUnit {
    pub uid: String,
    pub kind: UnitKind,
    pub name: String,
    /// Repo-relative path with `/` separators.
    pub file: String,
    /// 1-based inclusive line range.
    pub span: (usize, usize),
    pub source: String,
    /// Member names attached to the unit when methods are not promoted.
    #[serde(default)]
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationKind {
    #[serde(rename = "DEPENDS_ON")]
    DependsOn,
    #[serde(rename = "CALLS")]
    Calls,
    #[serde(rename = "IMPLEMENTS")]
    Implements,
}

impl RelationKind {
    pub fn label(self) -> &'static str {
        match self {
            RelationKind::DependsOn => crate::graph::DEPENDS_ON,
            RelationKind::Calls => crate::graph::CALLS,
            RelationKind::Implements => crate::graph::IMPLEMENTS,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "DEPENDS_ON" => Some(Self::DependsOn),
            "CALLS" => Some(Self::Calls),
            "IMPLEMENTS" => Some(Self::Implements),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RawRelation {
    pub src_uid: String,
    pub kind: RelationKind,
    pub target_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved: Option<String>,
}

impl RawRelation {
    pub fn new(src_uid: impl Into<String>, kind: RelationKind, target_ref: impl Into<String>) -> Self {
        Self { src_uid: src_uid.into(), kind, target_ref: target_ref.into(), resolved: None }
    }
}

/// Names visible in a source file, used to expand bare references.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportContext {
    /// Simple (or aliased) name -> qualified uid candidate.
    pub symbols: BTreeMap<String, String>,
    /// Candidate uid = prefix + reference (own package, wildcard imports).
    pub prefixes: Vec<String>,
}

impl ImportContext {
    /// Candidate uids for a reference, in preference order.
    pub fn expand(&self, target_ref: &str) -> Vec<String> {
        let mut out = Vec::new();
        let (head, tail) = match target_ref.split_once('.') {
            Some((h, t)) => (h, Some(t)),
            None => (target_ref, None),
        };
        if let Some(q) = self.symbols.get(head) {
            out.push(match tail {
                Some(t) => format!("{q}.{t}"),
                None => q.clone(),
            });
        }
        out.extend(self.prefixes.iter().map(|p| format!("{p}{target_ref}")));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(file: impl Into<String>, line: Option<usize>, message: impl Into<String>) -> Self {
        Self { file: file.into(), line, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.file, line, self.message),
            None => write!(f, "{}: {}", self.file, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseOutput {
    pub units: Vec<CodeUnit>,
    pub relations: Vec<RawRelation>,
    pub context: ImportContext,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOptions {
    /// Emit methods as their own units instead of unit members.
    pub promote_methods: bool,
}

/// A pluggable parser for one language. Implementations must be
/// deterministic and must never panic on arbitrary input.
pub trait LanguageAdapter: Send + Sync {
    fn key(&self) -> &'static str;

    /// Whether the repo-relative path is a file this adapter parses.
    fn accepts(&self, rel_path: &str) -> bool;

    fn parse(&self, rel_path: &str, bytes: &[u8], options: ParseOptions) -> ParseOutput;
}

pub fn adapter_for(key: &str) -> Option<Box<dyn LanguageAdapter>> {
    match key {
        "java" => Some(Box::new(JavaAdapter)),
        "python" => Some(Box::new(PythonAdapter)),
        "facts" => Some(Box::new(FactsAdapter)),
        _ => None,
    }
}

/// Runs an adapter over a file, decoding lossily and reporting replacement.
pub fn parse_file(adapter: &dyn LanguageAdapter, rel_path: &str, bytes: &[u8], options: ParseOptions) -> ParseOutput {
    let mut out = adapter.parse(rel_path, bytes, options);
    if std::str::from_utf8(bytes).is_err() {
        out.diagnostics
            .insert(0, Diagnostic::new(rel_path, None, "invalid UTF-8 replaced with U+FFFD"));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub options: ParseOptions,
    pub max_file_bytes: u64,
    pub parallelism: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self { options: ParseOptions::default(), max_file_bytes: 1 << 20, parallelism: 4 }
    }
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no language adapter named {0:?}")]
    NoAdapter(String),
    #[error("duplicate project name {0:?}")]
    DuplicateProjectName(String),
    #[error("invalid glob {pattern:?}: {message}")]
    BadGlob { pattern: String, message: String },
    #[error("no repositories given")]
    NoRepositories,
    #[error("graph assembly failed: {0}")]
    Graph(#[from] crate::graph::GraphError),
}

/// Last path segment of a qualified name (`a.b:C.d#e` -> `e`).
pub(crate) fn simple_name(qualified: &str) -> &str {
    qualified.rsplit(['.', ':', '#', '/']).next().unwrap_or(qualified)
}

/// Full lines `start..=end` (1-based) of `text`.
pub(crate) fn line_slice(text: &str, start: usize, end: usize) -> String {
    text.split_inclusive('\n')
        .skip(start.saturating_sub(1))
        .take(end + 1 - start.min(end + 1))
        .collect::<String>()
        .trim_end_matches(['\n', '\r'])
        .to_string()
}
