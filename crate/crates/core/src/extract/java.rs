//! Adapter for a Java-like subset: packages, imports, classes, interfaces,
//! enums and records with their fields, methods and invocations.
//!
//! Identifiers are `package.Type` (nested: `package.Outer.Inner`); promoted
//! methods are `package.Type#method`, with `~N` appended to overloads.
//!
//! Relation rules:
//! - `extends X` -> DEPENDS_ON X (classes and interfaces alike)
//! - `implements X` -> IMPLEMENTS X
//! - single-type imports -> DEPENDS_ON on every top-level type of the file
//! - field and record component types -> DEPENDS_ON
//! - `new X(..)`, `field.m(..)`, `local.m(..)`, `Type.m(..)` -> CALLS on the type

use std::collections::{BTreeSet, HashMap, HashSet};

use super::lex::{mask_c_like, tokenize, LineIndex, Tok};
use super::{line_slice, CodeUnit, Diagnostic, ImportContext, LanguageAdapter, ParseOptions, ParseOutput, RawRelation, RelationKind, UnitKind};

pub struct JavaAdapter;

impl LanguageAdapter for JavaAdapter {
    fn key(&self) -> &'static str {
        "java"
    }

    fn accepts(&self, rel_path: &str) -> bool {
        rel_path.ends_with(".java")
    }

    fn parse(&self, rel_path: &str, bytes: &[u8], options: ParseOptions) -> ParseOutput {
        let text = String::from_utf8_lossy(bytes);
        let masked = mask_c_like(&text);
        let toks = tokenize(&masked);
        let mut parser = Parser {
            toks: &toks,
            text: &text,
            lines: LineIndex::new(&text),
            file: rel_path,
            options,
            package: None,
            imports: Vec::new(),
            wildcards: Vec::new(),
            top_level: Vec::new(),
            out: ParseOutput::default(),
        };
        parser.run();
        parser.finish()
    }
}

const MODIFIERS: &[&str] = &[
    "public", "private", "protected", "static", "final", "abstract", "sealed", "strictfp", "transient", "volatile",
    "synchronized", "native", "default",
];

const NON_TYPES: &[&str] = &["void", "var", "this", "super", "null", "true", "false", "return", "new"];

struct Parser<'a> {
    toks: &'a [Tok<'a>],
    text: &'a str,
    lines: LineIndex,
    file: &'a str,
    options: ParseOptions,
    package: Option<String>,
    imports: Vec<String>,
    wildcards: Vec<String>,
    top_level: Vec<String>,
    out: ParseOutput,
}

struct Body {
    open: usize,
    close: usize,
    locals: HashMap<String, String>,
    src: String,
}

impl<'a> Parser<'a> {
    fn tok(&self, i: usize) -> &str {
        self.toks.get(i).map_or("", |t| t.text)
    }

    fn is_ident(&self, i: usize) -> bool {
        self.toks.get(i).is_some_and(Tok::is_ident)
    }

    fn line(&self, i: usize) -> usize {
        let off = self.toks.get(i).map_or(self.text.len(), |t| t.off);
        self.lines.line(off)
    }

    fn diag(&mut self, i: usize, message: impl Into<String>) {
        let line = self.line(i.min(self.toks.len().saturating_sub(1)));
        self.out.diagnostics.push(Diagnostic::new(self.file, Some(line), message));
    }

    fn relate(&mut self, src: &str, kind: RelationKind, target: String) {
        self.out.relations.push(RawRelation::new(src, kind, target));
    }

    /// Index of the bracket closing the one at `open`, or the last token.
    fn matching(&self, open: usize) -> usize {
        let (o, c) = match self.tok(open) {
            "(" => ("(", ")"),
            "{" => ("{", "}"),
            "[" => ("[", "]"),
            "<" => ("<", ">"),
            _ => return open,
        };
        let mut depth = 0usize;
        for i in open..self.toks.len() {
            let t = self.tok(i);
            if t == o {
                depth += 1;
            } else if t == c {
                depth -= 1;
                if depth == 0 {
                    return i;
                }
            } else if o == "<" && matches!(t, ";" | "{" | "}" | "(" | ")") {
                return i.saturating_sub(1);
            }
        }
        self.toks.len().saturating_sub(1)
    }

    /// `ident ("." ident)* ("." "*")?` starting at `i`.
    fn dotted(&self, mut i: usize) -> (String, usize) {
        let mut name = String::new();
        while self.is_ident(i) || (self.tok(i) == "*" && name.ends_with('.')) {
            name.push_str(self.tok(i));
            i += 1;
            if self.tok(i) == "." && (self.is_ident(i + 1) || self.tok(i + 1) == "*") {
                name.push('.');
                i += 1;
            } else {
                break;
            }
        }
        (name, i)
    }

    fn skip_to(&self, mut i: usize, sym: &str) -> usize {
        while i < self.toks.len() && self.tok(i) != sym {
            i += 1;
        }
        i
    }

    /// Skips annotations and modifiers starting at `i`.
    fn skip_prefix(&self, mut i: usize) -> usize {
        loop {
            if self.tok(i) == "@" && self.is_ident(i + 1) && self.tok(i + 1) != "interface" {
                let (_, next) = self.dotted(i + 1);
                i = next;
                if self.tok(i) == "(" {
                    i = self.matching(i) + 1;
                }
            } else if MODIFIERS.contains(&self.tok(i)) {
                i += 1;
            } else if self.tok(i) == "non" && self.tok(i + 1) == "-" && self.tok(i + 2) == "sealed" {
                i += 3;
            } else {
                return i;
            }
        }
    }

    /// If a type declaration starts at `i`, the index of its keyword.
    fn type_header(&self, i: usize) -> Option<usize> {
        let j = self.skip_prefix(i);
        match self.tok(j) {
            "class" | "interface" | "enum" if self.is_ident(j + 1) => Some(j),
            "record" if self.is_ident(j + 1) && matches!(self.tok(j + 2), "(" | "<") => Some(j),
            "@" if self.tok(j + 1) == "interface" && self.is_ident(j + 2) => Some(j + 1),
            _ => None,
        }
    }

    fn run(&mut self) {
        let mut i = 0;
        while i < self.toks.len() {
            match self.tok(i) {
                "package" => {
                    let (name, next) = self.dotted(i + 1);
                    if !name.is_empty() {
                        self.package = Some(name);
                    }
                    i = self.skip_to(next, ";") + 1;
                }
                "import" => {
                    let is_static = self.tok(i + 1) == "static";
                    let (name, next) = self.dotted(i + 1 + usize::from(is_static));
                    if let Some(prefix) = name.strip_suffix('*') {
                        if !is_static {
                            self.wildcards.push(prefix.to_string());
                        }
                    } else if !name.is_empty() && !is_static {
                        self.imports.push(name);
                    }
                    i = self.skip_to(next, ";") + 1;
                }
                _ => match self.type_header(i) {
                    Some(kw) => i = self.parse_type(i, kw, None) + 1,
                    None => i += 1,
                },
            }
        }
    }

    /// Parses a type declaration and returns the index of its closing brace.
    fn parse_type(&mut self, start: usize, kw: usize, outer: Option<&str>) -> usize {
        let keyword = self.tok(kw).to_string();
        let name = self.tok(kw + 1).to_string();
        let uid = match (outer, &self.package) {
            (Some(o), _) => format!("{o}.{name}"),
            (None, Some(p)) => format!("{p}.{name}"),
            (None, None) => name.clone(),
        };
        let unit_kind = if keyword == "interface" { UnitKind::Interface } else { UnitKind::Class };
        let mut j = kw + 2;

        let mut type_params = HashSet::new();
        if self.tok(j) == "<" {
            let close = self.matching(j);
            for k in j + 1..close {
                if matches!(self.tok(k - 1), "<" | ",") && self.is_ident(k) {
                    type_params.insert(self.tok(k).to_string());
                }
            }
            j = close + 1;
        }

        let mut fields = HashMap::new();
        if keyword == "record" && self.tok(j) == "(" {
            let close = self.matching(j);
            let params = self.params(j, close);
            for (pname, ty) in &params {
                fields.insert(pname.clone(), ty.clone());
            }
            for r in self.type_refs(j + 1, close, &type_params) {
                self.relate(&uid, RelationKind::DependsOn, r);
            }
            j = close + 1;
        }

        while j < self.toks.len() && !matches!(self.tok(j), "{" | ";" | "}") {
            match self.tok(j) {
                "extends" => j = self.type_list(j + 1, &uid, RelationKind::DependsOn, &type_params),
                "implements" => j = self.type_list(j + 1, &uid, RelationKind::Implements, &type_params),
                "permits" => {
                    let mut sink = Vec::new();
                    std::mem::swap(&mut sink, &mut self.out.relations);
                    j = self.type_list(j + 1, &uid, RelationKind::DependsOn, &type_params);
                    self.out.relations = sink;
                }
                _ => j += 1,
            }
        }

        let slot = self.out.units.len();
        let start_line = self.line(start);
        self.out.units.push(CodeUnit {
            uid: uid.clone(),
            kind: unit_kind,
            name: name.clone(),
            file: self.file.to_string(),
            span: (start_line, start_line),
            source: String::new(),
            members: Vec::new(),
        });
        if outer.is_none() {
            self.top_level.push(uid.clone());
        }

        let close = if self.tok(j) == "{" {
            let close = self.matching(j);
            if self.tok(close) != "}" {
                self.diag(j, format!("unterminated body of {name}"));
            }
            let members = self.members(j + 1, close, &uid, &name, keyword == "enum", &type_params, fields);
            self.out.units[slot].members = members;
            close
        } else {
            self.diag(j, format!("missing body for {keyword} {name}"));
            j.min(self.toks.len().saturating_sub(1))
        };

        let end_line = self.line(close).max(start_line);
        let unit = &mut self.out.units[slot];
        unit.span = (start_line, end_line);
        unit.source = line_slice(self.text, start_line, end_line);
        close
    }

    /// Comma separated types after extends/implements/permits. The first
    /// name of each entry gets `kind`; generic arguments get DEPENDS_ON.
    fn type_list(&mut self, mut j: usize, src: &str, kind: RelationKind, type_params: &HashSet<String>) -> usize {
        loop {
            let start = j;
            let mut angle = 0i32;
            while j < self.toks.len() {
                match self.tok(j) {
                    "<" => angle += 1,
                    ">" => angle -= 1,
                    "," if angle <= 0 => break,
                    "{" | ";" | "}" | "implements" | "extends" | "permits" => break,
                    _ => {}
                }
                j += 1;
            }
            let refs = self.type_refs(start, j, type_params);
            for (n, r) in refs.into_iter().enumerate() {
                self.relate(src, if n == 0 { kind } else { RelationKind::DependsOn }, r);
            }
            if self.tok(j) == "," {
                j += 1;
            } else {
                return j;
            }
        }
    }

    /// Type names in tokens `[from, to)`: dotted chains containing a
    /// capitalized segment, minus type parameters.
    fn type_refs(&self, from: usize, to: usize, type_params: &HashSet<String>) -> Vec<String> {
        let mut refs = Vec::new();
        let mut k = from;
        while k < to {
            if self.is_ident(k) && self.tok(k.wrapping_sub(1)) != "." && !(k > 0 && self.tok(k - 1) == "@") {
                let (chain, next) = self.dotted(k);
                let next = next.min(to.max(k + 1));
                let has_type = chain.split('.').any(|s| s.chars().next().is_some_and(char::is_uppercase));
                if has_type && !type_params.contains(&chain) && !NON_TYPES.contains(&chain.as_str()) {
                    refs.push(chain);
                }
                k = next;
            } else {
                k += 1;
            }
        }
        refs
    }

    /// `(Type name, Type name)` -> name -> base type.
    fn params(&self, open: usize, close: usize) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut start = open + 1;
        let mut angle = 0i32;
        for k in open + 1..=close {
            match self.tok(k) {
                "<" => angle += 1,
                ">" => angle -= 1,
                "," | ")" if angle <= 0 && (k == close || self.tok(k) == ",") => {
                    let first = self.skip_prefix(start);
                    if k > first + 1 && self.is_ident(k - 1) {
                        let ty = self.base_type(first, k - 1);
                        if let Some(ty) = ty {
                            out.push((self.tok(k - 1).to_string(), ty));
                        }
                    }
                    start = k + 1;
                }
                _ => {}
            }
        }
        out
    }

    fn base_type(&self, from: usize, to: usize) -> Option<String> {
        (from..to)
            .find(|&k| self.is_ident(k) && self.toks[k].is_capitalized())
            .map(|k| self.tok(k).to_string())
    }

    #[allow(clippy::too_many_arguments)]
    fn members(
        &mut self,
        from: usize,
        to: usize,
        class_uid: &str,
        class_name: &str,
        is_enum: bool,
        type_params: &HashSet<String>,
        mut fields: HashMap<String, String>,
    ) -> Vec<String> {
        let mut methods: Vec<String> = Vec::new();
        let mut method_counts: HashMap<String, usize> = HashMap::new();
        let mut bodies: Vec<Body> = Vec::new();
        let mut j = from;

        if is_enum {
            let mut k = j;
            while k < to && self.tok(k) != ";" {
                if matches!(self.tok(k), "(" | "{") {
                    k = self.matching(k);
                }
                k += 1;
            }
            j = k + 1;
        }

        while j < to {
            if self.tok(j) == ";" {
                j += 1;
                continue;
            }
            if let Some(kw) = self.type_header(j) {
                j = self.parse_type(j, kw, Some(class_uid)) + 1;
                continue;
            }
            let mut k = j;
            let mut depth = 0i32;
            let mut seen_eq = false;
            while k < to {
                match self.tok(k) {
                    "(" | "[" => depth += 1,
                    ")" | "]" => depth -= 1,
                    "=" if depth == 0 => seen_eq = true,
                    "{" if depth == 0 && !seen_eq => break,
                    "{" => k = self.matching(k),
                    ";" if depth <= 0 => break,
                    _ => {}
                }
                k += 1;
            }
            let k = k.min(to);
            let body = (self.tok(k) == "{" && k < to).then(|| (k, self.matching(k).min(to)));
            let next = body.map_or(k + 1, |(_, c)| c + 1);
            let head = self.skip_prefix(j);

            if head >= k {
                if let Some((open, close)) = body {
                    bodies.push(Body { open, close, locals: HashMap::new(), src: class_uid.to_string() });
                }
                j = next;
                continue;
            }

            let eq = (head..k).find(|&x| self.tok(x) == "=").unwrap_or(k);
            let paren = (head..eq).find(|&x| self.tok(x) == "(");
            match paren {
                Some(p) if p > head && self.is_ident(p - 1) => {
                    let name = self.tok(p - 1).to_string();
                    let close = self.matching(p);
                    let mut locals: HashMap<String, String> = self.params(p, close).into_iter().collect();
                    locals.retain(|_, ty| !type_params.contains(ty));
                    if !methods.contains(&name) {
                        methods.push(name.clone());
                    }
                    let n = method_counts.entry(name.clone()).or_insert(0);
                    *n += 1;
                    let src = if self.options.promote_methods {
                        let muid = if *n == 1 { format!("{class_uid}#{name}") } else { format!("{class_uid}#{name}~{n}") };
                        let start_line = self.line(j);
                        let end_line = self.line(body.map_or(k, |(_, c)| c)).max(start_line);
                        self.out.units.push(CodeUnit {
                            uid: muid.clone(),
                            kind: UnitKind::Method,
                            name: if name == class_name { name.clone() } else { format!("{class_name}.{name}") },
                            file: self.file.to_string(),
                            span: (start_line, end_line),
                            source: line_slice(self.text, start_line, end_line),
                            members: Vec::new(),
                        });
                        muid
                    } else {
                        class_uid.to_string()
                    };
                    if let Some((open, close)) = body {
                        bodies.push(Body { open, close, locals, src });
                    }
                }
                Some(_) => self.diag(j, "unrecognized member declaration"),
                None => {
                    let name_idx = (head..eq).rev().find(|&x| self.is_ident(x));
                    if let Some(name_idx) = name_idx {
                        if let Some(ty) = self.base_type(head, name_idx) {
                            fields.insert(self.tok(name_idx).to_string(), ty);
                        }
                        for r in self.type_refs(head, name_idx, type_params) {
                            self.relate(class_uid, RelationKind::DependsOn, r);
                        }
                    }
                    if eq < k {
                        bodies.push(Body { open: eq, close: k, locals: HashMap::new(), src: class_uid.to_string() });
                    }
                }
            }
            j = next;
        }

        for body in bodies {
            self.scan_body(&body, &fields, type_params);
        }
        methods
    }

    fn scan_body(&mut self, body: &Body, fields: &HashMap<String, String>, type_params: &HashSet<String>) {
        let mut locals = body.locals.clone();
        let mut calls: Vec<String> = Vec::new();
        let mut m = body.open + 1;
        while m < body.close {
            let t = self.tok(m);
            let prev = self.tok(m.wrapping_sub(1));
            if t == "new" && self.is_ident(m + 1) {
                let (chain, next) = self.dotted(m + 1);
                if chain.split('.').any(|s| s.chars().next().is_some_and(char::is_uppercase)) {
                    calls.push(chain);
                }
                m = next;
                continue;
            }
            if self.is_ident(m) && prev != "." && prev != "new" {
                // local declaration: Type [<..>] [[]] name (= | ; | :)
                if self.toks[m].is_capitalized() {
                    let mut x = m + 1;
                    if self.tok(x) == "<" {
                        x = self.matching(x) + 1;
                    }
                    while self.tok(x) == "[" && self.tok(x + 1) == "]" {
                        x += 2;
                    }
                    if self.is_ident(x) && matches!(self.tok(x + 1), "=" | ";" | ":") {
                        locals.insert(self.tok(x).to_string(), t.to_string());
                    }
                }
                let (receiver, call_at) = if t == "this" && self.tok(m + 1) == "." && self.is_ident(m + 2) {
                    (self.tok(m + 2), m + 3)
                } else {
                    (t, m + 1)
                };
                if self.tok(call_at) == "." && self.is_ident(call_at + 1) && self.tok(call_at + 2) == "(" {
                    let ty = if t == "this" {
                        fields.get(receiver).cloned()
                    } else {
                        locals.get(receiver).or_else(|| fields.get(receiver)).cloned().or_else(|| {
                            receiver.chars().next().is_some_and(char::is_uppercase).then(|| receiver.to_string())
                        })
                    };
                    if let Some(ty) = ty.filter(|ty| !type_params.contains(ty)) {
                        calls.push(ty);
                    }
                }
            }
            m += 1;
        }
        for c in calls {
            self.relate(&body.src, RelationKind::Calls, c);
        }
    }

    fn finish(mut self) -> ParseOutput {
        for uid in &self.top_level {
            for import in &self.imports {
                self.out.relations.push(RawRelation::new(uid.clone(), RelationKind::DependsOn, import.clone()));
            }
        }

        let mut ctx = ImportContext::default();
        for import in &self.imports {
            let simple = import.rsplit('.').next().unwrap_or(import);
            ctx.symbols.entry(simple.to_string()).or_insert_with(|| import.clone());
        }
        for uid in &self.top_level {
            ctx.prefixes.push(format!("{uid}."));
        }
        if let Some(p) = &self.package {
            ctx.prefixes.push(format!("{p}."));
        }
        ctx.prefixes.extend(self.wildcards.iter().cloned());
        self.out.context = ctx;

        let mut seen = BTreeSet::new();
        self.out.relations.retain(|r| seen.insert((r.src_uid.clone(), r.kind, r.target_ref.clone())));
        self.out
    }
}
