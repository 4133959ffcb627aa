//! Deterministic stand-in for a model endpoint.
//!
//! Completions are templates keyed by the prompt's `# prompt:` header and
//! the names embedded in it. Embeddings are hashed bags of words: tokens are
//! split on non-alphanumerics, lowercased, bucketed by 32-bit FNV-1a modulo
//! the dimension, counted and L2-normalized.

use std::collections::BTreeMap;

use serde_json::json;

use super::{normalize, prompt_kind, LlmProvider, ProviderError, ProviderMode, Tier};

pub const MOCK_DIMENSION: usize = 256;

#[derive(Debug, Clone)]
pub struct MockProvider {
    dimension: usize,
}

impl Default for MockProvider {
    fn default() -> Self {
        Self::new()
    }
}

impl MockProvider {
    pub fn new() -> Self {
        Self { dimension: MOCK_DIMENSION }
    }

    pub fn with_dimension(dimension: usize) -> Self {
        Self { dimension: dimension.max(1) }
    }
}

fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for b in bytes {
        h ^= *b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

pub fn mock_embedding(text: &str, dimension: usize) -> Vec<f32> {
    let mut v = vec![0f32; dimension];
    for token in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let token = token.to_lowercase();
        v[fnv1a(token.as_bytes()) as usize % dimension] += 1.0;
    }
    normalize(v)
}

/// `OrderProcessor` -> `order processor`.
pub(crate) fn humanize(name: &str) -> String {
    let mut out = String::new();
    let chars: Vec<char> = name.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if c == '_' || c == '-' || c == '.' {
            out.push(' ');
            continue;
        }
        let boundary = i > 0
            && c.is_uppercase()
            && (chars[i - 1].is_lowercase() || chars.get(i + 1).is_some_and(|n| n.is_lowercase()) && chars[i - 1].is_uppercase());
        if boundary && !out.ends_with(' ') {
            out.push(' ');
        }
        out.extend(c.to_lowercase());
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn field<'a>(prompt: &'a str, key: &str) -> &'a str {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(':')))
        .map(str::trim)
        .unwrap_or("")
}

/// Lines after `header` up to the next blank line.
fn list<'a>(prompt: &'a str, header: &str) -> Vec<&'a str> {
    prompt
        .lines()
        .skip_while(|l| l.trim() != header)
        .skip(1)
        .take_while(|l| !l.trim().is_empty())
        .filter_map(|l| l.strip_prefix("- "))
        .collect()
}

fn section<'a>(prompt: &'a str, start: &str, end: &str) -> &'a str {
    let Some(i) = prompt.find(start) else { return "" };
    let rest = &prompt[i + start.len()..];
    let j = rest.find(end).unwrap_or(rest.len());
    rest[..j].trim_matches('\n')
}

/// Name suffix -> operation verb; `None` marks a representation.
const ROLE_SUFFIXES: &[(&str, Option<&str>)] = &[
    ("Controller", Some("CREATE")),
    ("Resource", Some("CREATE")),
    ("Processor", Some("PROCESS")),
    ("Service", Some("MANAGE")),
    ("Manager", Some("MANAGE")),
    ("Handler", Some("HANDLE")),
    ("Repository", Some("PERSIST")),
    ("Publisher", Some("PRODUCE")),
    ("Producer", Some("PRODUCE")),
    ("Consumer", Some("CONSUME")),
    ("Listener", Some("CONSUME")),
    ("Config", Some("CONFIGURE")),
    ("Model", None),
    ("DTO", None),
    ("Dto", None),
    ("Entity", None),
    ("Record", None),
];

/// Per entity: (code uid, verb) pairs and representing code uids.
type Found = BTreeMap<String, (Vec<(String, String)>, Vec<String>)>;

fn entities_reply(prompt: &str) -> String {
    let mut found: Found = BTreeMap::new();
    for line in list(prompt, "Code units:") {
        let mut parts = line.split(" | ");
        let (Some(uid), Some(name)) = (parts.next(), parts.next()) else { continue };
        let simple = name.rsplit('.').next().unwrap_or(name);
        for (suffix, verb) in ROLE_SUFFIXES {
            let Some(stem) = simple.strip_suffix(suffix).filter(|s| s.starts_with(char::is_uppercase)) else { continue };
            let entry = found.entry(stem.to_string()).or_default();
            match verb {
                Some(v) => entry.0.push((uid.to_string(), v.to_string())),
                None => entry.1.push(uid.to_string()),
            }
            break;
        }
    }
    let entities: Vec<_> = found
        .into_iter()
        .map(|(stem, (ops, reps))| {
            let mut users: Vec<String> = ops.iter().map(|(u, _)| u.clone()).chain(reps.iter().cloned()).collect();
            users.iter_mut().for_each(|u| *u = u.rsplit(['.', ':', '#']).next().unwrap_or(u).to_string());
            json!({
                "name": humanize(&stem),
                "description": format!("{} entity: {} handled by {}.", stem, humanize(&stem), users.join(", ")),
                "operations": ops.iter().map(|(u, v)| json!({"codeUid": u, "verb": v})).collect::<Vec<_>>(),
                "representedBy": reps,
            })
        })
        .collect();
    json!({ "entities": entities }).to_string()
}

/// Names of nodes in rendered observations (`[kind] id: name — ...`).
fn observed_names(prompt: &str) -> Vec<String> {
    let mut names = Vec::new();
    for line in prompt.lines() {
        let Some(rest) = line.trim_start().strip_prefix('[') else { continue };
        let Some((_, rest)) = rest.split_once("] ") else { continue };
        let Some((_, rest)) = rest.split_once(": ") else { continue };
        let name = rest.split(" — ").next().unwrap_or(rest).trim().to_string();
        if !name.is_empty() && !names.contains(&name) {
            names.push(name);
        }
    }
    names
}

const STOPWORDS: [&str; 36] = [
    "a", "an", "and", "are", "by", "can", "do", "does", "for", "from", "how", "i", "in", "is", "it", "of", "on", "or", "the",
    "this", "to", "what", "when", "where", "which", "who", "why", "with", "work", "works", "should", "must", "be", "am", "my",
    "there",
];

/// The question without punctuation and common function words.
fn search_terms(question: &str) -> String {
    let words: Vec<&str> = question
        .split(|c: char| !c.is_alphanumeric() && c != '-')
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(&w.to_lowercase().as_str()))
        .collect();
    if words.is_empty() { question.trim().to_string() } else { words.join(" ") }
}

fn agent_reply(prompt: &str) -> String {
    let question = search_terms(field(prompt, "Question"));
    let observations = prompt.lines().filter(|l| l.starts_with("Observation:")).count();
    match observations {
        0 => format!("Thought: look for domain entities first.\nACTION entities_tool {}", json!({ "query": question })),
        1 => format!("Thought: check which projects are involved.\nACTION projects_tool {}", json!({ "query": question })),
        _ => final_reply(prompt),
    }
}

fn final_reply(prompt: &str) -> String {
    let names = observed_names(prompt);
    if names.is_empty() {
        "FINAL: No relevant elements were found in the knowledge graph.".to_string()
    } else {
        format!("FINAL: Relevant elements: {}.", names.join(", "))
    }
}

impl MockProvider {
    fn reply(&self, prompt: &str) -> String {
        match prompt_kind(prompt).unwrap_or("") {
            "describe_code" => {
                let name = field(prompt, "Unit");
                format!("Summary of {name}: {} {} in {}.", humanize(name), field(prompt, "Kind"), field(prompt, "Project"))
            }
            "describe_project" => {
                let children: Vec<&str> = list(prompt, "Code units:")
                    .into_iter()
                    .map(|l| l.split_once(" (").and_then(|(_, r)| r.split_once(')')).map_or(l, |(n, _)| n))
                    .collect();
                format!("Project {} groups {} code units: {}.", field(prompt, "Project"), children.len(), children.join(", "))
            }
            "describe_system" => {
                let projects: Vec<&str> = list(prompt, "Projects:").into_iter().map(|l| l.split(':').next().unwrap_or(l)).collect();
                format!("System {} is composed of {} projects: {}.", field(prompt, "System"), projects.len(), projects.join(", "))
            }
            "extract_entities" => entities_reply(prompt),
            "repair_json" => self.reply(section(prompt, "Original request:\n", "\n\nPrevious reply:")),
            "agent" => agent_reply(prompt),
            "agent_final" => final_reply(prompt),
            "agent_repair" => final_reply(prompt),
            other => format!("Mock response ({}).", if other.is_empty() { "plain" } else { other }),
        }
    }
}

impl LlmProvider for MockProvider {
    fn complete(&self, prompt: &str, _tier: Tier) -> Result<String, ProviderError> {
        Ok(self.reply(prompt))
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        Ok(mock_embedding(text, self.dimension))
    }

    fn mode(&self) -> ProviderMode {
        ProviderMode::Mock
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embedding_family(&self) -> String {
        format!("mock-fnv1a/{}", self.dimension)
    }
}
