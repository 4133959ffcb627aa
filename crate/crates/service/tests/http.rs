mod common;

use std::time::{Duration, Instant};

use common::{spawn_server, sse_events, stdout, Workspace};
use repograph_core::agent::{AgentTrace, TraceRecord};
use repograph_core::graph::QueryRows;
use repograph_core::pipeline::Phase;
use repograph_service::server::{AppState, BuildJob};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

const QUERIES: [&str; 12] = [
    "MATCH (n) RETURN COUNT",
    "MATCH (p:Project) RETURN p",
    "MATCH (a:Code)-[:DEPENDS_ON]->(b:Code) RETURN a,b",
    "MATCH (a:Code)-[:DEPENDS_ON|CALLS*1..3]->(b) RETURN b, a",
    r#"MATCH (c:Code {name:"OrderProcessor"})-[*1..2]->(x) RETURN x"#,
    "MATCH (e:Entity)-[:RELATES_TO]->(p:Project) RETURN e,p",
    "MATCH (c:Code)-[:REPRESENTS]->(e:Entity) RETURN COUNT",
    "MATCH (s:System)-[:CONTAINS*2..2]->(c) RETURN c",
    "MATCH (a)-[*1..8]->(a) RETURN a",
    r#"MATCH (c {kind:"Code", file:"nope"}) RETURN c"#,
    "MATCH (c:Code)-[:CREATE|PROCESS]->(e) RETURN c, e",
    "MATCH (p:Project)-[:CONTAINS]->(c:Code) RETURN COUNT",
];

/// Builds through the CLI, then serves the same config.
fn built_server(name: &str) -> (Workspace, String) {
    let ws = Workspace::new(name);
    let out = ws.cli(&["build"]);
    assert!(out.status.success(), "{}", common::stderr(&out));
    let state = AppState::new();
    state.register(ws.config()).unwrap();
    let url = spawn_server(state);
    (ws, url)
}

fn post(client: &Client, url: &str, body: Value) -> (StatusCode, Value) {
    let r = client.post(url).json(&body).send().unwrap();
    let status = r.status();
    (status, r.json().unwrap_or(Value::Null))
}

fn get(client: &Client, url: &str) -> (StatusCode, Value) {
    let r = client.get(url).send().unwrap();
    let status = r.status();
    (status, r.json().unwrap_or(Value::Null))
}

#[test]
fn cli_and_http_queries_agree() {
    let (ws, url) = built_server("parity");
    let client = Client::new();
    for q in QUERIES {
        let cli = ws.cli(&["query", q, "--json"]);
        assert!(cli.status.success(), "{q}: {}", common::stderr(&cli));
        let from_cli: Value = serde_json::from_str(&stdout(&cli)).unwrap();
        let (status, from_http) = post(&client, &format!("{url}/api/systems/parity/query"), json!({ "query": q }));
        assert_eq!(status, StatusCode::OK, "{q}");
        assert_eq!(from_cli, from_http, "{q}");

        let rows: QueryRows = serde_json::from_value(from_http).unwrap();
        let text = ws.cli(&["query", q]);
        assert_eq!(stdout(&text), rows.to_string(), "{q}");
    }
}

#[test]
fn parse_errors_agree_on_position() {
    let (ws, url) = built_server("errors");
    let client = Client::new();
    for (q, pos) in [("MATCH (a:Cod) RETURN a", 9), ("MATCH (a)-[:X*0..2]->(b) RETURN a", 14), ("MATCH (a) RETURN b", 17)] {
        let (status, body) = post(&client, &format!("{url}/api/systems/errors/query"), json!({ "query": q }));
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert_eq!(body["position"], pos, "{q}: {body}");
        let cli = ws.cli(&["query", q]);
        assert_eq!(cli.status.code(), Some(2));
        assert!(common::stderr(&cli).contains(&format!("parse error at {pos}:")), "{}", common::stderr(&cli));
        assert!(common::stderr(&cli).contains(body["error"].as_str().unwrap()));
    }
}

#[test]
fn chat_stream_reconstructs_the_stored_trace() {
    let (_ws, url) = built_server("chat");
    let client = Client::new();
    for question in ["Which modules handle orders?", "How does order processing work?"] {
        let resp = client.post(format!("{url}/api/systems/chat/chat")).json(&json!({ "question": question })).send().unwrap();
        assert_eq!(resp.status(), StatusCode::OK);
        assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
        let trace_id = resp.headers()["x-trace-id"].to_str().unwrap().to_string();
        let events = sse_events(&resp.text().unwrap());

        let names: Vec<&str> = events.iter().map(|(e, _)| e.as_str()).collect();
        assert_eq!(names.first(), Some(&"start"));
        assert_eq!(names.last(), Some(&"final"));
        assert!(names[1..names.len() - 1].iter().all(|n| *n == "step"), "{names:?}");

        let records: Vec<TraceRecord> = events.iter().map(|(_, d)| serde_json::from_str(d).unwrap()).collect();
        let streamed = AgentTrace::from_records(records).unwrap();
        let (status, stored) = get(&client, &format!("{url}/api/systems/chat/traces/{trace_id}"));
        assert_eq!(status, StatusCode::OK);
        let stored: AgentTrace = serde_json::from_value(stored).unwrap();
        assert_eq!(streamed, stored);
        assert_eq!(streamed.to_jsonl(), stored.to_jsonl());
        assert_eq!(streamed.question, question);
        assert!(streamed.final_answer.is_some());
    }
    let (_, list) = get(&client, &format!("{url}/api/systems/chat/traces"));
    assert_eq!(list["traces"].as_array().unwrap().len(), 2);
}

#[test]
fn error_statuses() {
    let ws = Workspace::new("unbuilt");
    let state = AppState::new();
    state.register(ws.config()).unwrap();
    let url = spawn_server(state);
    let client = Client::new();

    assert_eq!(get(&client, &format!("{url}/api/systems/nope")).0, StatusCode::NOT_FOUND);
    assert_eq!(get(&client, &format!("{url}/api/jobs/job-999")).0, StatusCode::NOT_FOUND);
    assert_eq!(get(&client, &format!("{url}/api/systems/unbuilt/traces/trace-1")).0, StatusCode::NOT_FOUND);
    let (status, body) = post(&client, &format!("{url}/api/systems/unbuilt/query"), json!({"query": "MATCH (n) RETURN COUNT"}));
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    assert_eq!(post(&client, &format!("{url}/api/systems/unbuilt/chat"), json!({"question": "x"})).0, StatusCode::CONFLICT);
    assert_eq!(get(&client, &format!("{url}/api/systems/unbuilt/graph")).0, StatusCode::CONFLICT);

    let config = serde_json::to_value(ws.config()).unwrap();
    assert_eq!(post(&client, &format!("{url}/api/systems"), config.clone()).0, StatusCode::CONFLICT);
    let mut broken = config.clone();
    broken["name"] = json!("broken");
    broken["repos"][0]["root"] = json!("/definitely/not/here");
    let (status, body) = post(&client, &format!("{url}/api/systems"), broken);
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("/definitely/not/here"), "{body}");
    let mut secret = config;
    secret["name"] = json!("secret");
    secret["provider"]["apiKey"] = json!("sk-inline");
    assert!(post(&client, &format!("{url}/api/systems"), secret).0.is_client_error());
}

#[test]
fn built_graph_errors_and_browsing() {
    let (_ws, url) = built_server("browse");
    let client = Client::new();
    let base = format!("{url}/api/systems/browse");
    assert_eq!(get(&client, &format!("{base}/nodes/missing")).0, StatusCode::NOT_FOUND);
    assert_eq!(get(&client, &format!("{base}/graph?kind=Widget")).0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(get(&client, &format!("{base}/graph?limit=0")).0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(post(&client, &format!("{base}/chat"), json!({"question": "  "})).0, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, page) = get(&client, &format!("{base}/graph?limit=4&offset=2"));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(page["total"], 9);
    assert_eq!(page["nodes"].as_array().unwrap().len(), 4);
    assert!(!page.to_string().contains("\"source\""));

    let (_, code) = get(&client, &format!("{base}/graph?kind=Code&projectId=project:orders-api"));
    assert_eq!(code["total"], 2);

    let (status, node) = get(&client, &format!("{base}/nodes/com.acme.manager.OrderProcessor"));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(node["projectId"], "project:orders-manager");
    assert!(node["source"].as_str().unwrap().contains("class OrderProcessor"));
    assert!(node["node"]["attrs"].get("source").is_none());
    assert!(node["node"].get("embedding").is_none());
    assert!(node["outgoing"].as_array().unwrap().iter().any(|e| e["label"] == "DEPENDS_ON" && e["dst"] == "com.acme.models.OrderModel"));

    let (_, sys) = get(&client, &base);
    assert_eq!((sys["built"].as_bool(), sys["nodes"].as_u64()), (Some(true), Some(9)));
}

#[test]
fn build_jobs_move_forward_and_exclude_each_other() {
    let ws = Workspace::new("jobs");
    let state = AppState::new();
    state.register(ws.config()).unwrap();
    let url = spawn_server(state.clone());
    let client = Client::new();

    let (status, body) = post(&client, &format!("{url}/api/systems/jobs/build"), json!({}));
    assert_eq!(status, StatusCode::ACCEPTED);
    let job_id = body["jobId"].as_str().unwrap().to_string();

    let mut phases = Vec::new();
    let deadline = Instant::now() + Duration::from_secs(30);
    loop {
        let (_, job) = get(&client, &format!("{url}/api/jobs/{job_id}"));
        let job: BuildJob = serde_json::from_value(job).unwrap();
        if phases.last() != Some(&job.phase) {
            phases.push(job.phase);
        }
        if matches!(job.phase, Phase::Done | Phase::Failed) || Instant::now() > deadline {
            break;
        }
        std::thread::sleep(Duration::from_millis(2));
    }
    assert_eq!(phases.last(), Some(&Phase::Done), "{phases:?}");
    assert!(phases.windows(2).all(|w| w[0] < w[1]), "{phases:?}");
    // Done means the graph is already queryable.
    let (status, rows) = post(&client, &format!("{url}/api/systems/jobs/query"), json!({"query": "MATCH (p:Project) RETURN COUNT"}));
    assert_eq!((status, rows), (StatusCode::OK, json!({"count": 3})));
    assert!(ws.snapshot().is_file());
}

#[test]
fn concurrent_build_is_rejected() {
    let ws = Workspace::new("busy");
    let state = AppState::new();
    state.register(ws.config()).unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        // The second call comes before the first build can finish.
        let first = state.start_build("busy");
        let second = state.start_build("busy");
        assert!(first.is_ok());
        let err = format!("{:?}", second.unwrap_err());
        assert!(err.contains("409") || err.contains("CONFLICT") || err.contains("already running"), "{err}");
        loop {
            let job = state.job(first.as_ref().unwrap()).unwrap();
            if job.phase == Phase::Done {
                break;
            }
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        assert!(state.start_build("busy").is_ok());
    });
}
