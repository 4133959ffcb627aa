use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    #[serde(rename = "projects_tool")]
    Projects,
    #[serde(rename = "entities_tool")]
    Entities,
    #[serde(rename = "codes_tool")]
    Codes,
    #[serde(rename = "graph_query")]
    GraphQuery,
    #[serde(rename = "source_tool")]
    Source,
}

impl ToolName {
    pub const ALL: [ToolName; 5] = [ToolName::Projects, ToolName::Entities, ToolName::Codes, ToolName::GraphQuery, ToolName::Source];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::Projects => "projects_tool",
            ToolName::Entities => "entities_tool",
            ToolName::Codes => "codes_tool",
            ToolName::GraphQuery => "graph_query",
            ToolName::Source => "source_tool",
        }
    }

    /// Accepts `entities_tool` as well as the bare `entities`.
    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s || t.as_str().strip_suffix("_tool") == Some(s))
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: ToolName,
    pub args: Map<String, Value>,
}

impl ToolCall {
    pub fn new(tool: ToolName, args: Value) -> Self {
        Self { tool, args: args.as_object().cloned().unwrap_or_default() }
    }

    /// The wire form `ACTION <tool> <json>`.
    pub fn wire(&self) -> String {
        format!("ACTION {} {}", self.tool, Value::Object(self.args.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentAction {
    ToolCall(ToolCall),
    FinalAnswer { text: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReply {
    /// Text preceding the action line.
    pub thought: String,
    pub action: AgentAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed action: {0}")]
pub struct MalformedAction(pub String);

fn validate(tool: ToolName, args: &Map<String, Value>) -> Result<(), MalformedAction> {
    let bad = |m: String| Err(MalformedAction(m));
    let key = match tool {
        ToolName::Source => "id",
        _ => "query",
    };
    match args.get(key) {
        Some(Value::String(s)) if !s.trim().is_empty() => {}
        _ => return bad(format!("{tool} needs a non-empty string {key:?}")),
    }
    let allowed: &[&str] = match tool {
        ToolName::Projects | ToolName::Entities | ToolName::Codes => &["query", "k", "threshold"],
        ToolName::GraphQuery => &["query"],
        ToolName::Source => &["id"],
    };
    if let Some(extra) = args.keys().find(|k| !allowed.contains(&k.as_str())) {
        return bad(format!("{tool} does not take {extra:?}"));
    }
    if let Some(k) = args.get("k") {
        if k.as_u64().is_none_or(|k| k == 0) {
            return bad("k must be a positive integer".into());
        }
    }
    if let Some(t) = args.get("threshold") {
        if t.as_f64().is_none_or(|t| !(-1.0..=1.0).contains(&t)) {
            return bad("threshold must be a number in [-1, 1]".into());
        }
    }
    Ok(())
}

/// Finds the first `ACTION <tool> <json>` or `FINAL:` line. Anything before
/// it is kept as the thought.
pub fn parse_action(text: &str) -> Result<ParsedReply, MalformedAction> {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let trimmed = line.trim();
        let thought = || text[..start].trim().to_string();
        if let Some(answer) = trimmed.strip_prefix("FINAL:") {
            let rest = &text[offset..];
            let full = format!("{}\n{}", answer.trim(), rest).trim().to_string();
            if full.is_empty() {
                return Err(MalformedAction("empty final answer".into()));
            }
            return Ok(ParsedReply { thought: thought(), action: AgentAction::FinalAnswer { text: full } });
        }
        if let Some(rest) = trimmed.strip_prefix("ACTION ") {
            let rest = rest.trim_start();
            let (name, json) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
            let tool = ToolName::parse(name).ok_or_else(|| MalformedAction(format!("unknown tool {name:?}")))?;
            // The JSON should sit on the action line; allow it to continue
            // onto following lines.
            let tail = format!("{} {}", json, &text[offset..]);
            let mut stream = serde_json::Deserializer::from_str(tail.trim_start()).into_iter::<Value>();
            let args = match stream.next() {
                Some(Ok(Value::Object(m))) => m,
                Some(Ok(_)) => return Err(MalformedAction("tool arguments must be a JSON object".into())),
                _ => return Err(MalformedAction(format!("invalid JSON arguments for {tool}"))),
            };
            validate(tool, &args)?;
            return Ok(ParsedReply { thought: thought(), action: AgentAction::ToolCall(ToolCall { tool, args }) });
        }
    }
    Err(MalformedAction("no ACTION or FINAL line found".into()))
}
