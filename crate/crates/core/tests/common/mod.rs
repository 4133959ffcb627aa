#![allow(dead_code)]

use std::path::{Path, PathBuf};

use repograph_core::extract::RepoSpec;
use repograph_core::graph::CodeGraph;
use repograph_core::pipeline::{build_system, BuildConfig, BuildReport};
use repograph_core::provider::{LlmProvider, MockProvider};

pub fn fixture_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/orders")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/golden")
}

pub fn order_specs() -> Vec<RepoSpec> {
    let root = fixture_root();
    let mut api = RepoSpec::new("orders-api", root.join("orders-api"), "java");
    api.exclude = vec!["**/test/**".into()];
    vec![
        api,
        RepoSpec::new("orders-models", root.join("orders-models"), "java"),
        RepoSpec::new("orders-manager", root.join("orders-manager"), "java"),
    ]
}

pub fn build_with(provider: &dyn LlmProvider) -> (CodeGraph, BuildReport) {
    build_system(&order_specs(), "order-management", provider, &BuildConfig::default(), &mut |_, _| {}).unwrap()
}

/// The fully enriched order-management graph built with the mock provider.
pub fn order_graph() -> CodeGraph {
    build_with(&MockProvider::new()).0
}
