//! Command-line and HTTP shell around the knowledge graph engine.

pub mod cli;
pub mod config;
pub mod ops;
pub mod server;
