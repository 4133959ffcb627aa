mod common;

use repograph_core::pipeline::{build_system, BuildConfig, Phase};
use repograph_core::provider::MockProvider;

#[test]
fn phases_are_reported_in_order() {
    let mut phases = Vec::new();
    build_system(&common::order_specs(), "orders", &MockProvider::new(), &BuildConfig::default(), &mut |p, _| phases.push(p)).unwrap();
    assert_eq!(phases, [Phase::Scanning, Phase::Structural, Phase::Describing, Phase::Entities, Phase::Embedding, Phase::Done]);
}

#[test]
fn missing_root_fails_the_build() {
    let mut specs = common::order_specs();
    specs[1].root = specs[1].root.join("missing");
    let mut phases = Vec::new();
    let err = build_system(&specs, "orders", &MockProvider::new(), &BuildConfig::default(), &mut |p, _| phases.push(p));
    assert!(err.is_err());
    assert_eq!(phases.last(), Some(&Phase::Failed));
}
