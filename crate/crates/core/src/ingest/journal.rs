//! Append-only JSON Lines journal, one file per datasource.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde_json::{Map, Value as Json};

use super::{IngestError, Record};

pub(crate) struct Journal {
    path: PathBuf,
    file: File,
}

pub(crate) fn journal_path(dir: &Path, datasource: &str) -> PathBuf {
    dir.join(format!("{datasource}.jsonl"))
}

fn io(op: &'static str, path: &Path) -> impl FnOnce(std::io::Error) -> IngestError {
    let path = path.to_path_buf();
    move |source| IngestError::Io { op, path, source }
}

impl Journal {
    pub(crate) fn open(dir: &Path, datasource: &str) -> Result<Self, IngestError> {
        fs::create_dir_all(dir).map_err(io("create directory", dir))?;
        let path = journal_path(dir, datasource);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io("open journal", &path))?;
        Ok(Self { path, file })
    }

    /// Writes all records as one append and syncs before returning.
    pub(crate) fn append(&mut self, records: &[Record]) -> Result<(), IngestError> {
        if records.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, &r.to_json()).expect("in-memory JSON write");
            buf.push(b'\n');
        }
        self.file
            .write_all(&buf)
            .and_then(|_| self.file.sync_data())
            .map_err(io("append to journal", &self.path))
    }
}

/// One parsed journal line, or the 1-based line number of an unparsable one.
pub(crate) type JournalLine = Result<Map<String, Json>, usize>;

pub(crate) fn read_lines(path: &Path) -> Result<Vec<JournalLine>, IngestError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io("open journal", path)(e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io("read journal", path))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Json>(&line) {
            Ok(Json::Object(map)) => out.push(Ok(map)),
            _ => out.push(Err(i + 1)),
        }
    }
    Ok(out)
}
