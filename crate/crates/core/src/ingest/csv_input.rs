use std::collections::HashSet;

use crate::dsl::Entity;

use super::{validate_text_record, FieldError, IngestError, Reason, Record};

/// A record that passed validation, or every reason it failed.
type Checked = Result<Record, Vec<FieldError>>;

/// Validates every data row of a CSV document. Row results carry the 1-based
/// line number where the row starts.
pub(crate) fn parse_rows(
    datasource: &str,
    entity: &Entity,
    text: &str,
) -> Result<Vec<(usize, Checked)>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut seen = HashSet::new();
    for h in &headers {
        if entity.field(h).is_none() {
            return Err(IngestError::UnknownColumn(h.clone()));
        }
        if !seen.insert(h.as_str()) {
            return Err(IngestError::DuplicateColumn(h.clone()));
        }
    }

    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| IngestError::Csv(e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let result = if row.len() > headers.len() {
            Err(vec![FieldError {
                field: format!("column {}", headers.len() + 1),
                reason: Reason::UnknownField,
            }])
        } else {
            validate_text_record(
                datasource,
                entity,
                headers.iter().map(String::as_str).zip(row.iter()),
            )
        };
        rows.push((line, result));
    }
    Ok(rows)
}
