#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use repograph_service::config::SystemConfig;
use repograph_service::server::{router, AppState};
use tempfile::TempDir;

pub fn fixture_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/orders").canonicalize().unwrap()
}

/// A config for the order fixture whose snapshot lives in a temp dir.
pub struct Workspace {
    pub dir: TempDir,
    pub config_path: PathBuf,
}

impl Workspace {
    pub fn new(name: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = fixture_root();
        let toml = format!(
            r#"name = "{name}"
snapshot = "out/graph.clgs"

[provider]
mode = "mock"

[[repos]]
name = "orders-api"
root = "{api}"
language = "java"
exclude = ["**/test/**"]

[[repos]]
name = "orders-models"
root = "{models}"
language = "java"

[[repos]]
name = "orders-manager"
root = "{manager}"
language = "java"
"#,
            api = root.join("orders-api").display(),
            models = root.join("orders-models").display(),
            manager = root.join("orders-manager").display(),
        );
        let config_path = dir.path().join("system.toml");
        std::fs::write(&config_path, toml).unwrap();
        Self { dir, config_path }
    }

    pub fn config(&self) -> SystemConfig {
        SystemConfig::load(&self.config_path).unwrap()
    }

    pub fn snapshot(&self) -> PathBuf {
        self.dir.path().join("out/graph.clgs")
    }

    pub fn cli(&self, args: &[&str]) -> Output {
        cli(&[&args[..1], &["-c", self.config_path.to_str().unwrap()], &args[1..]].concat())
    }
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repograph")).args(args).output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Serves `state` on an ephemeral port from a background runtime.
pub fn spawn_server(state: AppState) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router(state)).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

/// Parses a `text/event-stream` body into (event, data) pairs.
pub fn sse_events(body: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for block in body.split("\n\n") {
        let mut event = None;
        let mut data = Vec::new();
        for line in block.lines() {
            if let Some(e) = line.strip_prefix("event:") {
                event = Some(e.trim().to_string());
            } else if let Some(d) = line.strip_prefix("data:") {
                data.push(d.strip_prefix(' ').unwrap_or(d).to_string());
            }
        }
        if let Some(e) = event {
            out.push((e, data.join("\n")));
        }
    }
    out
}
