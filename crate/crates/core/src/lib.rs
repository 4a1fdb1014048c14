//! Core library for climadash: a textual data-modeling language, a
//! deterministic generator for backend artifacts, record ingestion with a
//! JSONL journal, windowed KPI evaluation, versioned grid dashboards, and a
//! rule-based agent with BM25 passage retrieval.

pub mod agent;
pub mod codegen;
pub mod dashboard;
pub mod dsl;
pub mod ingest;
pub mod kpi;
pub mod time;

pub use dsl::{parse_model, validate_model, Model};
