mod common;

use proptest::prelude::*;
use repograph_core::agent::{
    agent_prompt, execute_tool, replay_mismatches, run, AgentAction, AgentConfig, AgentContext, AgentTrace, ToolCall,
    ToolName, TraceRecord, TraceStatus,
};
use repograph_core::graph::CodeGraph;
use repograph_core::provider::{MockProvider, ScriptStep, ScriptedProvider};
use serde_json::json;

fn run_with(g: &CodeGraph, p: &ScriptedProvider, config: AgentConfig) -> (AgentTrace, Vec<TraceRecord>) {
    let ctx = AgentContext::new(g, p, config);
    let mut records = Vec::new();
    let trace = run("How are orders processed?", &ctx, &mut |r| records.push(r.clone()));
    (trace, records)
}

/// Shape checks every trace must pass.
fn check_trace(trace: &AgentTrace, records: &[TraceRecord], config: AgentConfig) {
    assert!(trace.step_count() <= config.max_steps, "{} steps", trace.step_count());
    let indices: Vec<usize> = trace.steps.iter().map(|s| s.index).collect();
    assert_eq!(indices, (1..=trace.step_count()).collect::<Vec<_>>());
    assert!(matches!(records.first(), Some(TraceRecord::Start { .. })));
    assert!(matches!(records.last(), Some(TraceRecord::Final { .. })));
    assert_eq!(&AgentTrace::from_records(records.to_vec()).unwrap(), trace);
    assert_eq!(&AgentTrace::from_jsonl(&trace.to_jsonl()).unwrap(), trace);
    assert_eq!(trace.initial_prompt, agent_prompt(&trace.question, ""));
    for s in &trace.steps {
        if let Some(obs) = &s.observation {
            assert!(obs.token_estimate <= config.obs_tokens, "step {} uses {} tokens", s.index, obs.token_estimate);
        }
        assert!(s.repairs.len() <= 2);
    }
    match trace.status {
        TraceStatus::Error => assert!(trace.final_answer.is_none() && trace.error.is_some()),
        _ => assert!(trace.final_answer.is_some() && trace.error.is_none()),
    }
}

#[test]
fn never_finalizing_model_is_cut_off() {
    let g = common::order_graph();
    let p = ScriptedProvider::new([r#"Thought: again
ACTION codes_tool {"query": "order"}"#])
    .repeating();
    let config = AgentConfig::default();
    let (trace, records) = run_with(&g, &p, config);
    check_trace(&trace, &records, config);
    assert_eq!(trace.step_count(), 8);
    assert_eq!(trace.status, TraceStatus::Forced);
    assert!(trace.steps[..7].iter().all(|s| matches!(s.action, Some(AgentAction::ToolCall(_)))));
    assert!(trace.steps[7].forced);
    assert!(replay_mismatches(&trace, &AgentContext::new(&g, &p, config).tool_env()).is_empty());
}

#[test]
fn always_malformed_model_never_crashes() {
    let g = common::order_graph();
    let p = ScriptedProvider::new(["I think the answer involves orders."]).repeating();
    let config = AgentConfig::default();
    let (trace, records) = run_with(&g, &p, config);
    check_trace(&trace, &records, config);
    assert_eq!(trace.step_count(), 8);
    for s in &trace.steps[..7] {
        assert!(s.action.is_none() && s.error.is_some());
        assert_eq!(s.repairs.len(), 2);
    }
    assert_eq!(trace.status, TraceStatus::Forced);
    // 7 steps of 3 replies each, then the forced final.
    assert_eq!(p.prompts().len(), 22);
}

#[test]
fn scripted_session_observations_match_direct_calls() {
    let g = common::order_graph();
    let calls = [
        ToolCall::new(ToolName::Projects, json!({"query": "orders-api structure"})),
        ToolCall::new(ToolName::Entities, json!({"query": "order"})),
        ToolCall::new(ToolName::Codes, json!({"query": "order processor", "k": 2})),
        ToolCall::new(ToolName::GraphQuery, json!({"query": "MATCH (a:Code)-[:DEPENDS_ON]->(b) RETURN a,b"})),
        ToolCall::new(ToolName::Source, json!({"id": "com.acme.manager.OrderProcessor"})),
        ToolCall::new(ToolName::Source, json!({"id": "missing.Node"})),
    ];
    let mut script: Vec<String> = calls.iter().map(|c| format!("Thought: step\n{}", c.wire())).collect();
    script.push("Thought: enough\nFINAL: OrderProcessor handles orders.".into());
    let p = ScriptedProvider::new(script);
    let config = AgentConfig::default();
    let (trace, records) = run_with(&g, &p, config);
    check_trace(&trace, &records, config);
    assert_eq!(trace.status, TraceStatus::Answered);
    assert_eq!(trace.step_count(), 7);
    assert_eq!(trace.final_answer.as_deref(), Some("OrderProcessor handles orders."));

    let env = AgentContext::new(&g, &p, config).tool_env();
    for (step, call) in trace.steps.iter().zip(&calls[..5]) {
        assert_eq!(step.observation.as_ref().unwrap(), &execute_tool(&env, call).unwrap(), "step {}", step.index);
    }
    let err = trace.steps[5].observation.as_ref().unwrap();
    assert!(err.text.starts_with("TOOL ERROR: unknown node id"), "{}", err.text);
    assert!(replay_mismatches(&trace, &env).is_empty());

    // Each later prompt carries the earlier observations.
    let prompts = p.prompts();
    assert!(prompts[1].contains("[Project] project:orders-api"));
    assert!(!prompts[0].contains("Observation:"));
}

#[test]
fn provider_failure_ends_the_trace() {
    let g = common::order_graph();
    let p = ScriptedProvider::new([
        ScriptStep::from(r#"ACTION entities_tool {"query":"order"}"#),
        ScriptStep::Fail("503".into()),
        ScriptStep::Fail("503".into()),
        ScriptStep::Fail("503".into()),
    ]);
    let config = AgentConfig::default();
    let (trace, records) = run_with(&g, &p, config);
    check_trace(&trace, &records, config);
    assert_eq!(trace.status, TraceStatus::Error);
    assert_eq!(trace.step_count(), 1);
    assert!(trace.error.as_deref().unwrap().contains("503"));
}

#[test]
fn mock_agent_answers_and_replays() {
    let g = common::order_graph();
    let p = MockProvider::new();
    let config = AgentConfig::default();
    let ctx = AgentContext::new(&g, &p, config);
    let mut records = Vec::new();
    let trace = run("Which modules handle orders?", &ctx, &mut |r| records.push(r.clone()));
    check_trace(&trace, &records, config);
    assert_eq!(trace.status, TraceStatus::Answered);
    assert!(trace.steps.iter().any(|s| s.observation.is_some()));
    assert!(replay_mismatches(&trace, &ctx.tool_env()).is_empty());
    let again = run("Which modules handle orders?", &ctx, &mut |_| {});
    assert_eq!(again.final_answer, trace.final_answer);
}

#[test]
fn tampered_observation_is_reported() {
    let g = common::order_graph();
    let p = ScriptedProvider::new([r#"ACTION entities_tool {"query":"order"}"#, "FINAL: x"]);
    let config = AgentConfig::default();
    let (mut trace, _) = run_with(&g, &p, config);
    trace.steps[0].observation.as_mut().unwrap().text.push_str("\nextra");
    assert_eq!(replay_mismatches(&trace, &AgentContext::new(&g, &p, config).tool_env()), vec![1]);
}

fn reply_strategy() -> impl Strategy<Value = ScriptStep> {
    prop_oneof![
        4 => prop::sample::select(vec![
            r#"ACTION entities_tool {"query":"order"}"#,
            r#"Thought: x
ACTION projects_tool {"query": "orders api", "k": 2}"#,
            r#"ACTION codes_tool {"query":"dto","threshold":-1}"#,
            r#"ACTION graph_query {"query":"MATCH (a)-[*1..3]->(b) RETURN a,b"}"#,
            r#"ACTION graph_query {"query":"MATCH (a"}"#,
            r#"ACTION source_tool {"id":"com.acme.api.OrderDTO"}"#,
            r#"ACTION source_tool {"id":"project:orders-api"}"#,
        ])
        .prop_map(ScriptStep::from),
        3 => prop::sample::select(vec![
            "no action here",
            "ACTION fly_tool {}",
            r#"ACTION codes_tool {"query": 3}"#,
            r#"ACTION codes_tool {"query":"a","extra":1}"#,
            "ACTION codes_tool {not json",
            "FINAL:",
        ])
        .prop_map(ScriptStep::from),
        1 => Just(ScriptStep::from("FINAL: orders flow through the processor")),
        1 => Just(ScriptStep::Fail("timeout".into())),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn arbitrary_scripts_keep_trace_invariants(
        script in prop::collection::vec(reply_strategy(), 0..40),
        max_steps in 1usize..10,
        obs_tokens in 16usize..400,
    ) {
        thread_local!(static GRAPH: CodeGraph = common::order_graph());
        let config = AgentConfig { max_steps, obs_tokens, retries: 0, ..AgentConfig::default() };
        GRAPH.with(|g| {
            let p = ScriptedProvider::new(script);
            let (trace, records) = run_with(g, &p, config);
            check_trace(&trace, &records, config);
            assert!(replay_mismatches(&trace, &AgentContext::new(g, &p, config).tool_env()).is_empty());
        });
    }
}
