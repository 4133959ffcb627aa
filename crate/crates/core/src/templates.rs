//! Versioned prompt templates (`templates/*.txt`) with `{{placeholder}}`
//! substitution. Each starts with a `# prompt: <kind>` header line.

use crate::provider::prompt_hash;

pub const DESCRIBE_CODE: &str = include_str!("../templates/describe_code.txt");
pub const DESCRIBE_PROJECT: &str = include_str!("../templates/describe_project.txt");
pub const DESCRIBE_SYSTEM: &str = include_str!("../templates/describe_system.txt");
pub const EXTRACT_ENTITIES: &str = include_str!("../templates/extract_entities.txt");
pub const REPAIR_JSON: &str = include_str!("../templates/repair_json.txt");
pub const AGENT: &str = include_str!("../templates/agent.txt");
pub const AGENT_REPAIR: &str = include_str!("../templates/agent_repair.txt");
pub const AGENT_FINAL: &str = include_str!("../templates/agent_final.txt");

const BUILD_TEMPLATES: [(&str, &str); 5] = [
    ("describe_code", DESCRIBE_CODE),
    ("describe_project", DESCRIBE_PROJECT),
    ("describe_system", DESCRIBE_SYSTEM),
    ("extract_entities", EXTRACT_ENTITIES),
    ("repair_json", REPAIR_JSON),
];

const AGENT_TEMPLATES: [(&str, &str); 3] = [("agent", AGENT), ("agent_repair", AGENT_REPAIR), ("agent_final", AGENT_FINAL)];

fn hash_set(set: &[(&str, &str)]) -> String {
    let mut joined = String::new();
    for (name, body) in set {
        joined.push_str(name);
        joined.push('\0');
        joined.push_str(body);
        joined.push('\0');
    }
    prompt_hash(&joined)
}

/// Hash over the templates used while building a graph.
pub fn build_templates_hash() -> String {
    hash_set(&BUILD_TEMPLATES)
}

/// Hash over the agent prompts.
pub fn agent_templates_hash() -> String {
    hash_set(&AGENT_TEMPLATES)
}

/// Substitutes `{{key}}` placeholders in one pass; substituted values are
/// never re-expanded. Unknown placeholders are left verbatim.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let key = &after[..end];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[start..start + 2 + end + 2]),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}
