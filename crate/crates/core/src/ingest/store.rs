use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::Serialize;
use serde_json::Value as Json;

use crate::dsl::{Entity, Model};

use super::csv_input::parse_rows;
use super::journal::{journal_path, read_lines, Journal};
use super::{validate_record, FieldError, IngestError, Reason, Record};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestResult {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

/// A rejected record. `index` is the 0-based ordinal for JSON batches and
/// the 1-based line number for CSV. `field`/`reason` name the first problem;
/// `errors` lists them all.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub index: usize,
    pub field: String,
    pub reason: Reason,
    pub errors: Vec<FieldError>,
}

impl Rejection {
    fn new(index: usize, errors: Vec<FieldError>) -> Self {
        let first = errors.first().cloned().unwrap_or(FieldError {
            field: String::new(),
            reason: Reason::TypeMismatch,
        });
        Self {
            index,
            field: first.field,
            reason: first.reason,
            errors,
        }
    }
}

/// Time-range query. Bounds are epoch-ms and select `from < t <= to`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Query {
    pub from: Option<i64>,
    pub to: Option<i64>,
    pub limit: Option<usize>,
}

impl Query {
    pub fn window(from: i64, to: i64) -> Self {
        Self {
            from: Some(from),
            to: Some(to),
            limit: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub replayed: usize,
    /// `(journal path, 1-based line)` of lines that could not be replayed.
    pub skipped: Vec<(PathBuf, usize)>,
}

struct Series {
    entity: Entity,
    records: RwLock<Vec<Record>>,
    journal: Mutex<Option<Journal>>,
}

impl Series {
    fn timed(&self) -> bool {
        self.entity.time_field().is_some()
    }

    fn insert_all(&self, batch: Vec<Record>) {
        let mut records = self.records.write().unwrap_or_else(|e| e.into_inner());
        for r in batch {
            insert_ordered(&mut records, r);
        }
    }
}

/// Keeps records sorted by time axis, arrival order breaking ties.
fn insert_ordered(records: &mut Vec<Record>, r: Record) {
    match r.t {
        Some(t) => {
            let pos = records.partition_point(|x| x.t.is_some_and(|xt| xt <= t));
            records.insert(pos, r);
        }
        None => records.push(r),
    }
}

/// Per-datasource record sequences, optionally backed by journals under a
/// data directory. One writer per datasource at a time; readers see whole
/// batches or nothing.
pub struct Store {
    model: Arc<Model>,
    series: HashMap<String, Series>,
    data_dir: Option<PathBuf>,
}

impl Store {
    pub fn in_memory(model: Arc<Model>) -> Self {
        let series = model
            .datasources
            .iter()
            .filter_map(|d| {
                let entity = model.entity(&d.entity)?.clone();
                Some((
                    d.name.clone(),
                    Series {
                        entity,
                        records: RwLock::new(Vec::new()),
                        journal: Mutex::new(None),
                    },
                ))
            })
            .collect();
        Self {
            model,
            series,
            data_dir: None,
        }
    }

    /// Opens journals under `data_dir` (created if absent) and replays them
    /// before returning.
    pub fn open(model: Arc<Model>, data_dir: &Path) -> Result<(Self, ReplayReport), IngestError> {
        let mut store = Self::in_memory(model);
        store.data_dir = Some(data_dir.to_path_buf());
        let mut report = ReplayReport::default();
        for (name, series) in &store.series {
            let path = journal_path(data_dir, name);
            let mut replayed = Vec::new();
            for line in read_lines(&path)? {
                match line.map(|raw| validate_record(name, &series.entity, &raw)) {
                    Ok(Ok(r)) => replayed.push(r),
                    Ok(Err(_)) => report.skipped.push((path.clone(), replayed.len() + 1)),
                    Err(line_no) => report.skipped.push((path.clone(), line_no)),
                }
            }
            report.replayed += replayed.len();
            series.insert_all(replayed);
            *series.journal.lock().unwrap_or_else(|e| e.into_inner()) =
                Some(Journal::open(data_dir, name)?);
        }
        for (path, line) in &report.skipped {
            log::warn!("skipped unreadable journal line {}:{line}", path.display());
        }
        Ok((store, report))
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    fn series(&self, datasource: &str) -> Result<&Series, IngestError> {
        self.series
            .get(datasource)
            .ok_or_else(|| IngestError::UnknownDatasource(datasource.to_string()))
    }

    pub fn entity(&self, datasource: &str) -> Result<&Entity, IngestError> {
        self.series(datasource).map(|s| &s.entity)
    }

    /// Validates each record independently; valid ones are journaled and then
    /// made visible together.
    pub fn ingest_batch(&self, datasource: &str, records: &[Json]) -> Result<IngestResult, IngestError> {
        let series = self.series(datasource)?;
        let checked = records.iter().enumerate().map(|(i, raw)| {
            let result = match raw.as_object() {
                Some(map) => validate_record(datasource, &series.entity, map),
                None => Err(vec![FieldError {
                    field: String::new(),
                    reason: Reason::TypeMismatch,
                }]),
            };
            (i, result)
        });
        self.commit(series, checked)
    }

    /// Ingests CSV text whose header names entity fields in any order.
    pub fn ingest_csv(&self, datasource: &str, text: &str) -> Result<IngestResult, IngestError> {
        let series = self.series(datasource)?;
        let rows = parse_rows(datasource, &series.entity, text)?;
        self.commit(series, rows.into_iter())
    }

    fn commit(
        &self,
        series: &Series,
        checked: impl Iterator<Item = (usize, Result<Record, Vec<FieldError>>)>,
    ) -> Result<IngestResult, IngestError> {
        let mut accepted = Vec::new();
        let mut rejected = Vec::new();
        for (index, result) in checked {
            match result {
                Ok(r) => accepted.push(r),
                Err(errors) => rejected.push(Rejection::new(index, errors)),
            }
        }
        let mut journal = series.journal.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(journal) = journal.as_mut() {
            journal.append(&accepted)?;
        }
        let count = accepted.len();
        series.insert_all(accepted);
        Ok(IngestResult {
            accepted: count,
            rejected,
        })
    }

    /// Records with `from < t <= to`, ascending by time; `limit` keeps the
    /// most recent. Datasources without a time axis return arrival order and
    /// ignore the bounds.
    pub fn query(&self, datasource: &str, q: Query) -> Result<Vec<Record>, IngestError> {
        let series = self.series(datasource)?;
        if let (Some(from), Some(to)) = (q.from, q.to) {
            if from > to {
                return Err(IngestError::InvalidRange { from, to });
            }
        }
        if q.limit == Some(0) {
            return Err(IngestError::InvalidLimit);
        }
        let records = series.records.read().unwrap_or_else(|e| e.into_inner());
        let (lo, hi) = if series.timed() {
            let key = |r: &Record| r.t.unwrap_or(i64::MIN);
            let lo = q.from.map_or(0, |from| records.partition_point(|r| key(r) <= from));
            let hi = q
                .to
                .map_or(records.len(), |to| records.partition_point(|r| key(r) <= to));
            (lo, hi.max(lo))
        } else {
            (0, records.len())
        };
        let lo = match q.limit {
            Some(limit) => lo.max(hi.saturating_sub(limit)),
            None => lo,
        };
        Ok(records[lo..hi].to_vec())
    }

    /// Number of stored records for a datasource.
    pub fn len(&self, datasource: &str) -> Result<usize, IngestError> {
        Ok(self
            .series(datasource)?
            .records
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .len())
    }
}
