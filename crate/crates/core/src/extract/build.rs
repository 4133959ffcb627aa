use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;

use rayon::prelude::*;
use serde::Serialize;

use super::{
    adapter_for, line_slice, parse_file, resolve_references, scan_repository, CodeUnit, Diagnostic, ExtractConfig, ExtractError,
    ImportContext, ParseOutput, RawRelation, RepoSpec,
};
use crate::graph::{CodeGraph, Edge, Label, Node, NodeId, NodeKind, CONTAINS};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RepoReport {
    pub name: String,
    pub files: usize,
    pub units: usize,
    /// Raw relations emitted by the adapter.
    pub relations: usize,
    /// Relations that became graph edges.
    pub resolved: usize,
    pub unresolved: usize,
    pub ambiguous: usize,
    /// Relations resolving to their own source unit (not emitted).
    pub internal: usize,
    /// Relations resolving to an edge another reference already produced.
    pub duplicate: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AmbiguousReference {
    pub src: String,
    pub target: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExtractionReport {
    pub repos: Vec<RepoReport>,
    pub ambiguous: Vec<AmbiguousReference>,
    /// Distinct unresolved reference texts, sorted.
    pub unresolved_refs: Vec<String>,
}

impl ExtractionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn total(&self, field: fn(&RepoReport) -> usize) -> usize {
        self.repos.iter().map(field).sum()
    }
}

impl fmt::Display for ExtractionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.repos.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
        writeln!(f, "{:<width$} {:>6} {:>6} {:>9} {:>8} {:>10} {:>9}", "repo", "files", "units", "relations", "resolved", "unresolved", "ambiguous")?;
        for r in &self.repos {
            writeln!(
                f,
                "{:<width$} {:>6} {:>6} {:>9} {:>8} {:>10} {:>9}",
                r.name, r.files, r.units, r.relations, r.resolved, r.unresolved, r.ambiguous
            )?;
        }
        writeln!(f, "projects: {}", self.repos.len())?;
        for a in &self.ambiguous {
            writeln!(f, "ambiguous: {} -> {:?} matches {}", a.src, a.target, a.candidates.join(", "))?;
        }
        for r in &self.repos {
            for d in &r.diagnostics {
                writeln!(f, "diagnostic [{}] {d}", r.name)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StructuralBuild {
    pub graph: CodeGraph,
    pub report: ExtractionReport,
}

struct Parsed {
    repo: usize,
    output: ParseOutput,
}

/// Scans and parses every repository, resolves references across them and
/// assembles the System/Project/Code layer of the graph.
pub fn build_structural_graph(specs: &[RepoSpec], system_name: &str, config: &ExtractConfig) -> Result<StructuralBuild, ExtractError> {
    if specs.is_empty() {
        return Err(ExtractError::NoRepositories);
    }
    let mut names = BTreeSet::new();
    for s in specs {
        if !names.insert(s.name.as_str()) {
            return Err(ExtractError::DuplicateProjectName(s.name.clone()));
        }
    }

    let mut jobs = Vec::new();
    let mut report = ExtractionReport::default();
    for (i, spec) in specs.iter().enumerate() {
        let files = scan_repository(spec, config.max_file_bytes)?;
        report.repos.push(RepoReport { name: spec.name.clone(), files: files.len(), ..Default::default() });
        jobs.extend(files.into_iter().map(|f| (i, f)));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.max(1))
        .build()
        .expect("thread pool");
    let parsed: Vec<Parsed> = pool.install(|| {
        jobs.par_iter()
            .map(|(repo, rel)| {
                let spec = &specs[*repo];
                let adapter = adapter_for(&spec.language).ok_or_else(|| ExtractError::NoAdapter(spec.language.clone()))?;
                let path = spec.root.join(rel);
                let bytes = fs::read(&path).map_err(|source| ExtractError::Io { path, source })?;
                let mut output = parse_file(adapter.as_ref(), rel, &bytes, config.options);
                fill_sources(spec, &mut output);
                Ok(Parsed { repo: *repo, output })
            })
            .collect::<Result<_, ExtractError>>()
    })?;

    // Sequential, order-stable reduce.
    let mut units: Vec<(usize, CodeUnit)> = Vec::new();
    let mut seen_uids = BTreeSet::new();
    let mut files: Vec<(ImportContext, Vec<RawRelation>)> = Vec::new();
    for p in parsed {
        let rr = &mut report.repos[p.repo];
        rr.diagnostics.extend(p.output.diagnostics);
        for u in p.output.units {
            if seen_uids.insert(u.uid.clone()) {
                units.push((p.repo, u));
            } else {
                rr.diagnostics.push(Diagnostic::new(&u.file, Some(u.span.0), format!("duplicate uid {} ignored", u.uid)));
            }
        }
        rr.relations += p.output.relations.len();
        files.push((p.output.context, p.output.relations));
    }
    let repo_of: BTreeMap<&str, usize> = units.iter().map(|(r, u)| (u.uid.as_str(), *r)).collect();
    let plain_units: Vec<CodeUnit> = units.iter().map(|(_, u)| u.clone()).collect();
    let resolution = resolve_references(&plain_units, &files);

    let mut graph = CodeGraph::new(system_name);
    let system = graph.add_node(Node::new(NodeId::system(system_name), NodeKind::System, system_name))?;
    let contains = Label::new(CONTAINS)?;
    let mut projects = Vec::new();
    for spec in specs {
        let mut node = Node::new(NodeId::project(&spec.name), NodeKind::Project, &spec.name).with_attr("language", &spec.language);
        if let Some(url) = &spec.url {
            node = node.with_attr("url", url);
        }
        let id = graph.add_node(node)?;
        graph.add_edge(Edge::new(system.clone(), contains.clone(), id.clone()))?;
        projects.push(id);
    }
    for (repo, u) in &units {
        let node = Node::new(NodeId::new(&u.uid)?, NodeKind::Code, &u.name)
            .with_attr("repo", &specs[*repo].name)
            .with_attr("language", &specs[*repo].language)
            .with_attr("unit_kind", u.kind.as_str())
            .with_attr("file", &u.file)
            .with_attr("span", format!("{}-{}", u.span.0, u.span.1))
            .with_attr("source", &u.source)
            .with_attr("members", u.members.join(","));
        let id = graph.add_node(node)?;
        graph.add_edge(Edge::new(projects[*repo].clone(), contains.clone(), id))?;
        report.repos[*repo].units += 1;
    }
    for rel in &resolution.resolved {
        let dst = rel.resolved.as_deref().expect("resolved relations carry a target");
        graph.add_edge(Edge::new(NodeId::new(&rel.src_uid)?, Label::new(rel.kind.label())?, NodeId::new(dst)?))?;
    }

    let count = |report: &mut ExtractionReport, rels: &mut dyn Iterator<Item = &RawRelation>, field: fn(&mut RepoReport) -> &mut usize| {
        for r in rels {
            if let Some(&i) = repo_of.get(r.src_uid.as_str()) {
                *field(&mut report.repos[i]) += 1;
            }
        }
    };
    count(&mut report, &mut resolution.resolved.iter(), |r| &mut r.resolved);
    count(&mut report, &mut resolution.unresolved.iter(), |r| &mut r.unresolved);
    count(&mut report, &mut resolution.ambiguous.iter().map(|(r, _)| r), |r| &mut r.ambiguous);
    count(&mut report, &mut resolution.internal.iter(), |r| &mut r.internal);
    count(&mut report, &mut resolution.duplicate.iter(), |r| &mut r.duplicate);
    report.ambiguous = resolution
        .ambiguous
        .iter()
        .map(|(r, c)| AmbiguousReference { src: r.src_uid.clone(), target: r.target_ref.clone(), candidates: c.clone() })
        .collect();
    report.unresolved_refs = resolution.unresolved.iter().map(|r| r.target_ref.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    for a in &report.ambiguous {
        tracing::debug!(src = %a.src, target = %a.target, "ambiguous reference dropped");
    }

    Ok(StructuralBuild { graph, report })
}

/// Units declared without inline source (FACTS) get it from their file.
fn fill_sources(spec: &RepoSpec, output: &mut ParseOutput) {
    for u in output.units.iter_mut().filter(|u| u.source.is_empty()) {
        match fs::read(spec.root.join(&u.file)) {
            Ok(bytes) => u.source = line_slice(&String::from_utf8_lossy(&bytes), u.span.0, u.span.1),
            Err(e) => output.diagnostics.push(Diagnostic::new(&u.file, None, format!("source of {} unavailable: {e}", u.uid))),
        }
    }
}
