//! Declarative adapter: reads `facts.json` at the repository root.
//!
//! ```json
//! { "units": [{"uid": "a.A", "kind": "class", "name": "A", "file": "A.java", "span": [1, 3]}],
//!   "relations": [{"src": "a.A", "kind": "DEPENDS_ON", "target": "b.B"}] }
//! ```
//!
//! `source` may be given inline; otherwise the builder reads it from `file`.

use std::collections::BTreeSet;

use serde::Deserialize;

use super::{CodeUnit, Diagnostic, LanguageAdapter, ParseOptions, ParseOutput, RawRelation, RelationKind, UnitKind};

pub const FACTS_FILE: &str = "facts.json";

pub struct FactsAdapter;

#[derive(Deserialize)]
struct FactsFile {
    #[serde(default)]
    units: Vec<FactUnit>,
    #[serde(default)]
    relations: Vec<FactRelation>,
}

#[derive(Deserialize)]
struct FactUnit {
    uid: String,
    kind: String,
    name: String,
    file: String,
    span: (usize, usize),
    #[serde(default)]
    source: String,
    #[serde(default)]
    members: Vec<String>,
}

#[derive(Deserialize)]
struct FactRelation {
    src: String,
    kind: String,
    target: String,
}

fn unit_kind(s: &str) -> Option<UnitKind> {
    Some(match s {
        "class" => UnitKind::Class,
        "interface" => UnitKind::Interface,
        "function" => UnitKind::Function,
        "struct" => UnitKind::Struct,
        "method" => UnitKind::Method,
        _ => return None,
    })
}

impl LanguageAdapter for FactsAdapter {
    fn key(&self) -> &'static str {
        "facts"
    }

    fn accepts(&self, rel_path: &str) -> bool {
        rel_path == FACTS_FILE
    }

    fn parse(&self, rel_path: &str, bytes: &[u8], _options: ParseOptions) -> ParseOutput {
        let mut out = ParseOutput::default();
        if bytes.iter().all(u8::is_ascii_whitespace) {
            return out;
        }
        let text = String::from_utf8_lossy(bytes);
        let facts: FactsFile = match serde_json::from_str(&text) {
            Ok(f) => f,
            Err(e) => {
                out.diagnostics.push(Diagnostic::new(rel_path, Some(e.line()), format!("malformed facts: {e}")));
                return out;
            }
        };
        let mut uids = BTreeSet::new();
        for u in facts.units {
            let Some(kind) = unit_kind(&u.kind) else {
                out.diagnostics.push(Diagnostic::new(rel_path, None, format!("unit {}: unknown kind {:?}", u.uid, u.kind)));
                continue;
            };
            if u.uid.is_empty() || u.span.0 == 0 || u.span.0 > u.span.1 {
                out.diagnostics.push(Diagnostic::new(rel_path, None, format!("unit {:?}: bad uid or span", u.uid)));
                continue;
            }
            if !uids.insert(u.uid.clone()) {
                out.diagnostics.push(Diagnostic::new(rel_path, None, format!("unit {}: duplicate uid", u.uid)));
                continue;
            }
            out.units.push(CodeUnit {
                uid: u.uid,
                kind,
                name: u.name,
                file: u.file,
                span: u.span,
                source: u.source,
                members: u.members,
            });
        }
        for r in facts.relations {
            let Some(kind) = RelationKind::parse(&r.kind) else {
                out.diagnostics.push(Diagnostic::new(rel_path, None, format!("relation {}: unknown kind {:?}", r.src, r.kind)));
                continue;
            };
            if !uids.contains(&r.src) {
                out.diagnostics.push(Diagnostic::new(rel_path, None, format!("relation source {:?} is not a declared unit", r.src)));
                continue;
            }
            out.relations.push(RawRelation::new(r.src, kind, r.target));
        }
        out
    }
}
