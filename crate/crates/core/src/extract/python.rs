//! Adapter for Python sources.
//!
//! Units are top-level classes and functions with uid `module.path:QualName`
//! (`src/` is stripped and `__init__` names the package). Methods are members
//! of their class, or `module:Class.method` units when promoted.
//!
//! Relation rules:
//! - class bases -> DEPENDS_ON
//! - capitalized names in parameter/return/variable annotations -> DEPENDS_ON
//! - `name(..)`, `Alias.attr(..)`, `module.func(..)` -> CALLS
//!
//! Imports only feed reference expansion; they do not emit relations.

use std::collections::{BTreeMap, BTreeSet};

use super::lex::{mask_python, tokenize, Tok};
use super::{line_slice, CodeUnit, Diagnostic, LanguageAdapter, ParseOptions, ParseOutput, RawRelation, RelationKind, UnitKind};

pub struct PythonAdapter;

impl LanguageAdapter for PythonAdapter {
    fn key(&self) -> &'static str {
        "python"
    }

    fn accepts(&self, rel_path: &str) -> bool {
        rel_path.ends_with(".py")
    }

    fn parse(&self, rel_path: &str, bytes: &[u8], options: ParseOptions) -> ParseOutput {
        let text = String::from_utf8_lossy(bytes);
        let masked = mask_python(&text);
        ModuleParser::new(rel_path, &text, &masked, options).parse()
    }
}

pub(crate) fn module_path(rel_path: &str) -> String {
    let p = rel_path.strip_suffix(".py").unwrap_or(rel_path);
    let p = p.strip_prefix("src/").unwrap_or(p);
    let p = p.strip_suffix("/__init__").unwrap_or(p);
    p.replace('/', ".")
}

/// One logical line: first physical line (1-based), last physical line,
/// indentation and the masked text.
#[derive(Debug, Clone)]
struct Stmt {
    first: usize,
    last: usize,
    indent: usize,
    text: String,
}

impl Stmt {
    fn keyword_name(&self) -> Option<(&str, &str)> {
        let t = self.text.trim_start();
        let t = t.strip_prefix("async ").map(str::trim_start).unwrap_or(t);
        for kw in ["class", "def"] {
            if let Some(rest) = t.strip_prefix(kw) {
                if rest.starts_with(char::is_whitespace) {
                    let rest = rest.trim_start();
                    let end = rest.find(|c: char| !(c.is_alphanumeric() || c == '_')).unwrap_or(rest.len());
                    if end > 0 {
                        return Some((kw, &rest[..end]));
                    }
                }
            }
        }
        None
    }
}

struct ModuleParser<'a> {
    file: &'a str,
    text: &'a str,
    module: String,
    package: String,
    options: ParseOptions,
    stmts: Vec<Stmt>,
    modules: BTreeMap<String, String>,
    out: ParseOutput,
}

impl<'a> ModuleParser<'a> {
    fn new(file: &'a str, text: &'a str, masked: &str, options: ParseOptions) -> Self {
        let module = module_path(file);
        let package = if file.ends_with("__init__.py") {
            module.clone()
        } else {
            module.rsplit_once('.').map(|(p, _)| p.to_string()).unwrap_or_default()
        };
        let mut out = ParseOutput::default();
        let stmts = split_statements(masked, file, &mut out.diagnostics);
        Self { file, text, module, package, options, stmts, modules: BTreeMap::new(), out }
    }

    fn parse(mut self) -> ParseOutput {
        self.read_imports();
        self.out.context.prefixes.insert(0, format!("{}:", self.module));

        let top: Vec<usize> = (0..self.stmts.len()).filter(|&i| self.stmts[i].indent == 0).collect();
        for (n, &i) in top.iter().enumerate() {
            let Some((kw, name)) = self.stmts[i].keyword_name() else { continue };
            let (kw, name) = (kw.to_string(), name.to_string());
            let end_stmt = top.get(n + 1).copied().unwrap_or(self.stmts.len());
            let start_line = self.decorated_start(i);
            let end_line = self.block_end(i, end_stmt);
            let uid = format!("{}:{}", self.module, name);
            let slot = self.out.units.len();
            self.out.units.push(CodeUnit {
                uid: uid.clone(),
                kind: if kw == "class" { UnitKind::Class } else { UnitKind::Function },
                name: name.clone(),
                file: self.file.to_string(),
                span: (start_line, end_line),
                source: line_slice(self.text, start_line, end_line),
                members: Vec::new(),
            });

            if kw == "class" {
                for base in class_bases(&self.stmts[i].text) {
                    if let Some(target) = self.rewrite(&base) {
                        self.relate(&uid, RelationKind::DependsOn, target);
                    }
                }
                let members = self.class_members(&uid, &name, i + 1, end_stmt);
                self.out.units[slot].members = members;
            } else {
                self.scan(&uid, i, end_stmt);
            }
        }

        let mut seen = BTreeSet::new();
        self.out.relations.retain(|r| seen.insert((r.src_uid.clone(), r.kind, r.target_ref.clone())));
        self.out
    }

    fn relate(&mut self, src: &str, kind: RelationKind, target: String) {
        self.out.relations.push(RawRelation::new(src, kind, target));
    }

    fn decorated_start(&self, i: usize) -> usize {
        let indent = self.stmts[i].indent;
        let mut first = self.stmts[i].first;
        let mut k = i;
        while k > 0 && self.stmts[k - 1].indent == indent && self.stmts[k - 1].text.trim_start().starts_with('@') {
            k -= 1;
            first = self.stmts[k].first;
        }
        first
    }

    /// Last line of the block headed by statement `i`, where `end` bounds the
    /// search (first statement not belonging to the block).
    fn block_end(&self, i: usize, end: usize) -> usize {
        let indent = self.stmts[i].indent;
        let mut last = self.stmts[i].last;
        for s in &self.stmts[i + 1..end.min(self.stmts.len())] {
            if s.indent <= indent {
                break;
            }
            last = s.last;
        }
        last
    }

    fn class_members(&mut self, class_uid: &str, class_name: &str, from: usize, to: usize) -> Vec<String> {
        let body_indent = self.stmts[from..to].iter().map(|s| s.indent).min();
        let mut members = Vec::new();
        let mut k = from;
        while k < to {
            let s = &self.stmts[k];
            let is_method = Some(s.indent) == body_indent && s.keyword_name().is_some_and(|(kw, _)| kw == "def");
            if !is_method {
                self.scan_stmt(class_uid, k);
                k += 1;
                continue;
            }
            let name = s.keyword_name().map(|(_, n)| n.to_string()).unwrap_or_default();
            let mut end = k + 1;
            while end < to && self.stmts[end].indent > s.indent {
                end += 1;
            }
            if !members.contains(&name) {
                members.push(name.clone());
            }
            let src = if self.options.promote_methods {
                let uid = format!("{}:{class_name}.{name}", self.module);
                if !self.out.units.iter().any(|u| u.uid == uid) {
                    let start_line = self.decorated_start(k);
                    let end_line = self.block_end(k, end);
                    self.out.units.push(CodeUnit {
                        uid: uid.clone(),
                        kind: UnitKind::Method,
                        name: format!("{class_name}.{name}"),
                        file: self.file.to_string(),
                        span: (start_line, end_line),
                        source: line_slice(self.text, start_line, end_line),
                        members: Vec::new(),
                    });
                }
                uid
            } else {
                class_uid.to_string()
            };
            self.scan(&src, k, end);
            k = end;
        }
        members
    }

    fn scan(&mut self, src: &str, from: usize, to: usize) {
        for k in from..to.min(self.stmts.len()) {
            if k > from && self.stmts[k].indent <= self.stmts[from].indent {
                break;
            }
            self.scan_stmt(src, k);
        }
    }

    fn scan_stmt(&mut self, src: &str, k: usize) {
        let text = self.stmts[k].text.clone();
        let toks = tokenize(&text);
        let is_def = self.stmts[k].keyword_name().is_some_and(|(kw, _)| kw == "def");
        let starts_annotated = toks.len() > 2 && toks[0].is_ident() && toks[1].is(":") && !is_def;
        let mut depth = 0i32;
        let mut i = 0;
        while i < toks.len() {
            let t = toks[i];
            match t.text {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                _ => {}
            }
            let annotation_start = (is_def && t.is(":") && depth == 1)
                || (is_def && t.is("-") && toks.get(i + 1).is_some_and(|n| n.is(">")))
                || (starts_annotated && i == 1);
            if annotation_start {
                for chain in annotation_types(&toks[i + 1..]) {
                    if let Some(target) = self.rewrite(&chain) {
                        self.relate(src, RelationKind::DependsOn, target);
                    }
                }
            }
            if t.is_ident() && (i == 0 || !toks[i - 1].is(".")) {
                let (chain, next) = chain_at(&toks, i);
                let prev = if i > 0 { toks[i - 1].text } else { "" };
                if toks.get(next).is_some_and(|n| n.is("(")) && !matches!(prev, "def" | "class") && !is_keyword(&chain) {
                    if let Some(target) = self.rewrite(&chain) {
                        self.relate(src, RelationKind::Calls, target);
                    }
                }
                i = next.max(i + 1);
                continue;
            }
            i += 1;
        }
    }

    /// Maps a dotted reference to a class- or function-level target.
    fn rewrite(&self, chain: &str) -> Option<String> {
        let segs: Vec<&str> = chain.split('.').collect();
        let head = segs[0];
        if matches!(head, "self" | "cls" | "super") {
            return None;
        }
        if let Some(module) = self.modules.get(head) {
            if segs.len() == 1 {
                return None;
            }
            let member_at = (1..segs.len())
                .find(|&k| segs[k].starts_with(char::is_uppercase))
                .unwrap_or(segs.len() - 1);
            let mut path = module.clone();
            for s in &segs[1..member_at] {
                path.push('.');
                path.push_str(s);
            }
            return Some(format!("{path}:{}", segs[member_at]));
        }
        if let Some(sym) = self.out.context.symbols.get(head) {
            return Some(sym.clone());
        }
        if segs.len() == 1 {
            return Some(head.to_string());
        }
        // Capitalized receiver: a class attribute access.
        head.starts_with(char::is_uppercase).then(|| head.to_string())
    }

    fn absolute(&self, spec: &str) -> String {
        let dots = spec.chars().take_while(|c| *c == '.').count();
        if dots == 0 {
            return spec.to_string();
        }
        let mut base: Vec<&str> = if self.package.is_empty() { Vec::new() } else { self.package.split('.').collect() };
        for _ in 1..dots {
            base.pop();
        }
        let rest = &spec[dots..];
        if !rest.is_empty() {
            base.push(rest);
        }
        base.join(".")
    }

    fn read_imports(&mut self) {
        for s in self.stmts.clone() {
            let t = s.text.split_whitespace().collect::<Vec<_>>().join(" ");
            let t = t.replace(['(', ')'], " ");
            let words: Vec<&str> = t.split_whitespace().collect();
            match words.first().copied() {
                Some("import") => {
                    for item in t["import".len()..].split(',') {
                        let parts: Vec<&str> = item.split_whitespace().collect();
                        match parts.as_slice() {
                            [name, "as", alias] => {
                                self.modules.insert(alias.to_string(), name.to_string());
                            }
                            [name] => {
                                let head = name.split('.').next().unwrap_or(name);
                                self.modules.insert(head.to_string(), head.to_string());
                            }
                            _ => {}
                        }
                    }
                }
                Some("from") if words.get(2) == Some(&"import") => {
                    let module = self.absolute(words[1]);
                    let list = t.split_once(" import ").map(|x| x.1).unwrap_or("");
                    for item in list.split(',') {
                        let parts: Vec<&str> = item.split_whitespace().collect();
                        let (name, alias) = match parts.as_slice() {
                            [name, "as", alias] => (*name, *alias),
                            [name] => (*name, *name),
                            _ => continue,
                        };
                        if name == "*" {
                            self.out.context.prefixes.push(format!("{module}:"));
                        } else if name.starts_with(char::is_lowercase) && words[1].starts_with('.') && words[1].chars().all(|c| c == '.') {
                            // `from . import sibling` binds a module
                            self.modules.insert(alias.to_string(), format!("{module}.{name}"));
                        } else {
                            self.out.context.symbols.insert(alias.to_string(), format!("{module}:{name}"));
                        }
                    }
                }
                _ => {}
            }
        }
    }
}

const KEYWORDS: &[&str] = &[
    "if", "elif", "while", "for", "return", "and", "or", "not", "in", "is", "with", "assert", "yield", "lambda",
    "await", "print", "raise", "del", "except", "import", "from", "as", "global", "nonlocal", "pass", "else",
];

fn is_keyword(chain: &str) -> bool {
    KEYWORDS.contains(&chain)
}

fn chain_at(toks: &[Tok<'_>], i: usize) -> (String, usize) {
    let mut chain = toks[i].text.to_string();
    let mut k = i + 1;
    while k + 1 < toks.len() && toks[k].is(".") && toks[k + 1].is_ident() {
        chain.push('.');
        chain.push_str(toks[k + 1].text);
        k += 2;
    }
    (chain, k)
}

/// Capitalized names in an annotation, stopping at the `,`/`=`/`)` that ends it.
fn annotation_types(toks: &[Tok<'_>]) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut i = if toks.first().is_some_and(|t| t.is(">")) { 1 } else { 0 };
    while i < toks.len() {
        let t = toks[i];
        match t.text {
            "[" | "(" => depth += 1,
            "]" | ")" if depth == 0 => break,
            "]" | ")" => depth -= 1,
            "," | "=" | ":" if depth == 0 => break,
            _ => {}
        }
        if t.is_ident() && (i == 0 || !toks[i - 1].is(".")) {
            let (chain, next) = chain_at(toks, i);
            if chain.split('.').any(|s| s.starts_with(char::is_uppercase)) && chain != "None" {
                out.push(chain);
            }
            i = next;
            continue;
        }
        i += 1;
    }
    out
}

fn class_bases(stmt: &str) -> Vec<String> {
    let Some(open) = stmt.find('(') else { return Vec::new() };
    let mut depth = 0;
    let mut close = stmt.len();
    for (i, c) in stmt[open..].char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => {
                depth -= 1;
                if depth == 0 {
                    close = open + i;
                    break;
                }
            }
            _ => {}
        }
    }
    let inner = &stmt[open + 1..close.max(open + 1)];
    let mut bases = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    for (i, c) in inner.char_indices().chain(std::iter::once((inner.len(), ','))) {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' if depth == 0 => {
                let item = inner[start..i].trim();
                let base: String = item.chars().take_while(|c| c.is_alphanumeric() || *c == '_' || *c == '.').collect();
                if !base.is_empty() && !item.contains('=') && base.len() == item.len().min(base.len()) {
                    bases.push(base);
                }
                start = i + 1;
            }
            _ => {}
        }
    }
    bases
}

fn split_statements(masked: &str, file: &str, diagnostics: &mut Vec<Diagnostic>) -> Vec<Stmt> {
    let mut stmts = Vec::new();
    let mut depth = 0i32;
    let mut current: Option<Stmt> = None;
    let mut continued = false;
    for (n, line) in masked.split('\n').enumerate() {
        let line_no = n + 1;
        let trimmed = line.trim();
        match current.as_mut() {
            Some(stmt) if depth > 0 || continued => {
                stmt.text.push('\n');
                stmt.text.push_str(line);
                stmt.last = line_no;
            }
            _ => {
                if let Some(done) = current.take() {
                    stmts.push(done);
                }
                if trimmed.is_empty() {
                    continue;
                }
                let indent = line.len() - line.trim_start().len();
                current = Some(Stmt { first: line_no, last: line_no, indent, text: line.to_string() });
            }
        }
        for c in line.chars() {
            match c {
                '(' | '[' | '{' => depth += 1,
                ')' | ']' | '}' => depth = (depth - 1).max(0),
                _ => {}
            }
        }
        continued = trimmed.ends_with('\\');
    }
    if let Some(done) = current.take() {
        stmts.push(done);
    }
    if depth > 0 {
        diagnostics.push(Diagnostic::new(file, None, "unbalanced brackets at end of file"));
    }
    stmts
}
