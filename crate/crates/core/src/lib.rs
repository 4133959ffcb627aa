pub mod graph;
pub mod extract;
pub mod provider;
pub mod templates;
pub mod enrich;
pub mod index;
pub mod agent;
pub mod eval;
pub mod pipeline;
