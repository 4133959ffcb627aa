//! ReAct loop: the provider reasons, calls retrieval tools over the graph,
//! and answers once the observations suffice.

mod action;
mod render;
mod tools;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use action::{parse_action, AgentAction, MalformedAction, ParsedReply, ToolCall, ToolName};
pub use render::{edge_line, first_sentence, node_line, render_rows, render_subgraph, EMPTY_RESULT};
pub use tools::{
    codes_tool, entities_tool, error_result, estimate_tokens, execute_tool, graph_query_tool, projects_tool, source_tool,
    truncate_text, ToolEnv, ToolError, ToolPayload, ToolResult, TRUNCATION_MARKER,
};

use crate::graph::CodeGraph;
use crate::index::SearchParams;
use crate::provider::{with_retries, LlmProvider, ProviderError, Tier};
use crate::templates::{self, render};

pub const DEFAULT_MAX_STEPS: usize = 8;
pub const DEFAULT_OBS_TOKENS: usize = 2000;
pub const MAX_REPAIRS: usize = 2;

const FALLBACK_ANSWER: &str = "No answer could be produced from the gathered observations.";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub max_steps: usize,
    pub obs_tokens: usize,
    pub search: SearchParams,
    /// Provider retries per call.
    pub retries: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self { max_steps: DEFAULT_MAX_STEPS, obs_tokens: DEFAULT_OBS_TOKENS, search: SearchParams::default(), retries: 2 }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps == 0 {
            return Err("max_steps must be at least 1".into());
        }
        if self.obs_tokens < 16 {
            return Err("obs_tokens must be at least 16".into());
        }
        if self.search.k == 0 {
            return Err("k must be at least 1".into());
        }
        if !(-1.0..=1.0).contains(&self.search.threshold) {
            return Err("threshold must be in [-1, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repair {
    pub reply: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    /// 1-based.
    pub index: usize,
    pub thought: String,
    /// Absent when every attempt at this step was malformed.
    pub action: Option<AgentAction>,
    pub observation: Option<ToolResult>,
    #[serde(default)]
    pub repairs: Vec<Repair>,
    /// Final answer produced by the budget-exhausted prompt.
    #[serde(default)]
    pub forced: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    Answered,
    Forced,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrace {
    pub question: String,
    pub system_prompt_hash: String,
    /// The first prompt sent: system prompt plus the question only.
    pub initial_prompt: String,
    pub config: AgentConfig,
    pub steps: Vec<AgentStep>,
    pub final_answer: Option<String>,
    pub status: TraceStatus,
    pub error: Option<String>,
    pub wall_ms: u64,
}

/// One line of a trace file and one streamed event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Start { question: String, system_prompt_hash: String, initial_prompt: String, config: AgentConfig },
    Step(AgentStep),
    Final { final_answer: Option<String>, status: TraceStatus, error: Option<String>, wall_ms: u64 },
}

impl TraceRecord {
    pub fn event_name(&self) -> &'static str {
        match self {
            TraceRecord::Start { .. } => "start",
            TraceRecord::Step(_) => "step",
            TraceRecord::Final { .. } => "final",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("trace records out of order: {0}")]
    Order(String),
}

impl AgentTrace {
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    pub fn records(&self) -> Vec<TraceRecord> {
        let mut out = vec![TraceRecord::Start {
            question: self.question.clone(),
            system_prompt_hash: self.system_prompt_hash.clone(),
            initial_prompt: self.initial_prompt.clone(),
            config: self.config,
        }];
        out.extend(self.steps.iter().cloned().map(TraceRecord::Step));
        out.push(TraceRecord::Final {
            final_answer: self.final_answer.clone(),
            status: self.status,
            error: self.error.clone(),
            wall_ms: self.wall_ms,
        });
        out
    }

    /// Rebuilds a trace from a start record, steps, and a final record.
    pub fn from_records(records: impl IntoIterator<Item = TraceRecord>) -> Result<Self, TraceError> {
        let mut it = records.into_iter();
        let Some(TraceRecord::Start { question, system_prompt_hash, initial_prompt, config }) = it.next() else {
            return Err(TraceError::Order("expected a start record first".into()));
        };
        let mut steps = Vec::new();
        for r in it {
            match r {
                TraceRecord::Step(s) => steps.push(s),
                TraceRecord::Final { final_answer, status, error, wall_ms } => {
                    return Ok(Self { question, system_prompt_hash, initial_prompt, config, steps, final_answer, status, error, wall_ms });
                }
                TraceRecord::Start { .. } => return Err(TraceError::Order("second start record".into())),
            }
        }
        Err(TraceError::Order("missing final record".into()))
    }

    /// Line-delimited JSON: start, steps, final record last.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.records() {
            out.push_str(&serde_json::to_string(&r).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            records.push(serde_json::from_str(line).map_err(|source| TraceError::Json { line: i + 1, source })?);
        }
        Self::from_records(records)
    }
}

/// What one run needs: the read-only graph, the provider and the budget.
#[derive(Clone, Copy)]
pub struct AgentContext<'a> {
    pub graph: &'a CodeGraph,
    pub provider: &'a dyn LlmProvider,
    pub config: AgentConfig,
}

impl<'a> AgentContext<'a> {
    pub fn new(graph: &'a CodeGraph, provider: &'a dyn LlmProvider, config: AgentConfig) -> Self {
        Self { graph, provider, config }
    }

    pub fn tool_env(&self) -> ToolEnv<'a> {
        ToolEnv {
            graph: self.graph,
            provider: self.provider,
            search: self.config.search,
            obs_tokens: self.config.obs_tokens,
            retries: self.config.retries,
        }
    }
}

pub fn agent_prompt(question: &str, history: &str) -> String {
    render(templates::AGENT, &[("question", question), ("history", history)])
}

fn without_header(prompt: &str) -> &str {
    match prompt.split_once('\n') {
        Some((first, rest)) if first.starts_with("# prompt:") => rest,
        _ => prompt,
    }
}

fn clean_thought(thought: &str) -> String {
    thought.trim().strip_prefix("Thought:").unwrap_or(thought.trim()).trim().to_string()
}

fn history_entry(step: &AgentStep) -> String {
    let mut out = String::new();
    if !step.thought.is_empty() {
        out.push_str(&format!("Thought: {}\n", step.thought));
    }
    match (&step.action, &step.observation) {
        (Some(AgentAction::ToolCall(call)), Some(obs)) => {
            out.push_str(&format!("Action: {}\nObservation:\n{}\n", call.wire(), obs.text));
        }
        _ => {
            let e = step.error.as_deref().unwrap_or("no usable action");
            out.push_str(&format!("Action: (none)\nObservation:\nNo action was taken: {e}\n"));
        }
    }
    out
}

enum Outcome {
    Continue(AgentStep),
    Done(AgentStep, TraceStatus),
}

/// Sends `prompt`; malformed replies are re-prompted up to twice.
fn act(ctx: &AgentContext, prompt: &str, index: usize) -> Result<Outcome, ProviderError> {
    let retries = ctx.config.retries;
    let mut reply = with_retries(retries, || ctx.provider.complete(prompt, Tier::Fast))?;
    let mut repairs = Vec::new();
    loop {
        match parse_action(&reply) {
            Ok(parsed) => {
                let thought = clean_thought(&parsed.thought);
                return Ok(match parsed.action {
                    AgentAction::FinalAnswer { text } => Outcome::Done(
                        AgentStep { index, thought, action: Some(AgentAction::FinalAnswer { text }), observation: None, repairs, forced: false, error: None },
                        TraceStatus::Answered,
                    ),
                    AgentAction::ToolCall(call) => {
                        let env = ctx.tool_env();
                        let observation = match execute_tool(&env, &call) {
                            Ok(r) => r,
                            Err(ToolError::Provider(e)) => return Err(e),
                            Err(e) => error_result(&env, call.tool, &e),
                        };
                        Outcome::Continue(AgentStep {
                            index,
                            thought,
                            action: Some(AgentAction::ToolCall(call)),
                            observation: Some(observation),
                            repairs,
                            forced: false,
                            error: None,
                        })
                    }
                });
            }
            Err(e) => {
                let error = e.0.clone();
                repairs.push(Repair { reply: reply.clone(), error: error.clone() });
                if repairs.len() > MAX_REPAIRS {
                    // The last entry is the failure itself, not a re-prompt.
                    let last = repairs.pop().expect("just pushed");
                    return Ok(Outcome::Continue(AgentStep {
                        index,
                        thought: clean_thought(&last.reply),
                        action: None,
                        observation: None,
                        repairs,
                        forced: false,
                        error: Some(format!("{} (after {MAX_REPAIRS} repair prompts)", last.error)),
                    }));
                }
                let conversation = format!("{}\nPrevious reply:\n{}", without_header(prompt), reply);
                let repair = render(templates::AGENT_REPAIR, &[("error", &error), ("conversation", &conversation)]);
                reply = with_retries(retries, || ctx.provider.complete(&repair, Tier::Fast))?;
            }
        }
    }
}

fn forced_final(ctx: &AgentContext, prompt: &str, index: usize) -> Result<AgentStep, ProviderError> {
    let request = render(templates::AGENT_FINAL, &[("conversation", without_header(prompt))]);
    let reply = with_retries(ctx.config.retries, || ctx.provider.complete(&request, Tier::Fast))?;
    let (thought, text) = match parse_action(&reply) {
        Ok(ParsedReply { thought, action: AgentAction::FinalAnswer { text } }) => (clean_thought(&thought), text),
        _ => {
            let raw = reply.trim();
            (String::new(), if raw.is_empty() { FALLBACK_ANSWER.to_string() } else { raw.to_string() })
        }
    };
    Ok(AgentStep { index, thought, action: Some(AgentAction::FinalAnswer { text }), observation: None, repairs: Vec::new(), forced: true, error: None })
}

/// Runs one independent session. `on_record` sees the start record, every
/// step as it completes, and the final record.
pub fn run(question: &str, ctx: &AgentContext, on_record: &mut dyn FnMut(&TraceRecord)) -> AgentTrace {
    let started = Instant::now();
    let initial_prompt = agent_prompt(question, "");
    let start = TraceRecord::Start {
        question: question.to_string(),
        system_prompt_hash: templates::agent_templates_hash(),
        initial_prompt: initial_prompt.clone(),
        config: ctx.config,
    };
    on_record(&start);
    let mut steps: Vec<AgentStep> = Vec::new();
    let mut history = String::new();
    let max_steps = ctx.config.max_steps.max(1);
    let mut outcome: Result<TraceStatus, ProviderError> = Ok(TraceStatus::Forced);
    for index in 1..=max_steps {
        let prompt = agent_prompt(question, &history);
        let result = if index == max_steps {
            forced_final(ctx, &prompt, index).map(|s| Outcome::Done(s, TraceStatus::Forced))
        } else {
            act(ctx, &prompt, index)
        };
        match result {
            Ok(Outcome::Continue(step)) => {
                history.push_str(&history_entry(&step));
                on_record(&TraceRecord::Step(step.clone()));
                steps.push(step);
            }
            Ok(Outcome::Done(step, status)) => {
                on_record(&TraceRecord::Step(step.clone()));
                steps.push(step);
                outcome = Ok(status);
                break;
            }
            Err(e) => {
                tracing::warn!(step = index, error = %e, "agent run failed");
                outcome = Err(e);
                break;
            }
        }
    }
    let (status, error) = match outcome {
        Ok(s) => (s, None),
        Err(e) => (TraceStatus::Error, Some(e.to_string())),
    };
    let final_answer = match steps.last().and_then(|s| s.action.as_ref()) {
        Some(AgentAction::FinalAnswer { text }) if status != TraceStatus::Error => Some(text.clone()),
        _ => None,
    };
    let trace = AgentTrace {
        question: question.to_string(),
        system_prompt_hash: templates::agent_templates_hash(),
        initial_prompt,
        config: ctx.config,
        steps,
        final_answer,
        status,
        error,
        wall_ms: started.elapsed().as_millis() as u64,
    };
    on_record(trace.records().last().expect("final record"));
    trace
}

/// Re-executes every tool call of `trace` and reports the steps whose
/// observation differs.
pub fn replay_mismatches(trace: &AgentTrace, env: &ToolEnv) -> Vec<usize> {
    let mut bad = Vec::new();
    for step in &trace.steps {
        let (Some(AgentAction::ToolCall(call)), Some(obs)) = (&step.action, &step.observation) else { continue };
        let again = match execute_tool(env, call) {
            Ok(r) => r,
            Err(e) => error_result(env, call.tool, &e),
        };
        if &again != obs {
            bad.push(step.index);
        }
    }
    bad
}
