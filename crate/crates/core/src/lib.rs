//! Curation pipeline for Verilog source corpora.
//!
//! Raw project trees pass through five gates: keyword filtering,
//! exact-duplicate removal, a per-file syntax check, a per-project synthesis
//! check, and metadata extraction validated by a relational store. The
//! surviving modules feed corpus statistics and instruction-pair export.

pub mod analytics;
pub mod config;
pub mod dedup;
pub mod extract;
pub mod filter;
pub mod fsutil;
pub mod instruct;
pub mod llm;
pub mod model;
pub mod pipeline;
pub mod scan;
pub mod store;
pub mod syntax;
pub mod synth;
pub mod tools;

pub use model::{
    deserialize_record, serialize_record, BitWidth, Direction, ModuleRecord, PortSpec, ProjectUnit,
    SourceFile, Stage, StageReport,
};

/// Statistics with `f64` means and densities.
pub type Stats = analytics::CorpusStats<f64>;
pub type Summary = analytics::Summary<f64>;
pub type Metric = analytics::Metric<f64>;
