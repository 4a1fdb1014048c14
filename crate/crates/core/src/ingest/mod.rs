//! Record validation, the in-memory time-ordered store and its JSONL journal.

mod csv_input;
mod journal;
mod record;
mod store;

pub use record::{validate_record, validate_text_record, FieldError, Reason, Record, Value};
pub use store::{IngestResult, Query, Rejection, ReplayReport, Store};

use std::path::PathBuf;

use thiserror::Error;

/// Request-level ingestion failures. Per-record problems are reported in
/// [`IngestResult::rejected`] instead.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unknown datasource `{0}`")]
    UnknownDatasource(String),
    #[error("CSV header names unknown field `{0}`")]
    UnknownColumn(String),
    #[error("CSV header repeats column `{0}`")]
    DuplicateColumn(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("invalid query range: from {from} is after to {to}")]
    InvalidRange { from: i64, to: i64 },
    #[error("query limit must be positive")]
    InvalidLimit,
    #[error("{op} {}: {source}", path.display())]
    Io {
        op: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
