//! Numeric CSV feature tables.
//!
//! The first row is a header when none of its cells parse as numbers. A
//! header column named `group` (any case) supplies group ids.

use std::path::Path;

use super::IngestError;
use crate::data::{Dataset, DomainTag};

pub fn load_csv(path: &Path, tag: DomainTag) -> Result<Dataset, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        // skip blank lines
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let line = rec.position().map_or(records.len() + 1, |p| p.line() as usize);
        records.push((line, rec));
    }
    let Some((_, first)) = records.first() else {
        return Err(IngestError::EmptyFile { path: path.to_path_buf() });
    };

    let is_header = first.iter().all(|c| c.parse::<f64>().is_err());
    let group_col = if is_header { first.iter().position(|c| c.eq_ignore_ascii_case("group")) } else { None };
    let width = first.len();
    let body = if is_header { &records[1..] } else { &records[..] };
    if body.is_empty() {
        return Err(IngestError::EmptyFile { path: path.to_path_buf() });
    }

    let n_features = width - usize::from(group_col.is_some());
    let mut values = Vec::with_capacity(body.len() * n_features);
    let mut groups = Vec::new();
    for (line, rec) in body {
        if rec.len() != width {
            return Err(IngestError::FieldCount { path: path.to_path_buf(), line: *line, expected: width, found: rec.len() });
        }
        for (col, cell) in rec.iter().enumerate() {
            if Some(col) == group_col {
                groups.push(cell.to_owned());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| IngestError::Parse {
                path: path.to_path_buf(),
                line: *line,
                column: col + 1,
                value: cell.to_owned(),
            })?;
            values.push(v);
        }
    }
    let data = Dataset::from_flat(values, n_features, tag)?;
    Ok(if group_col.is_some() { data.with_groups(groups)? } else { data })
}

/// Writes a header (`f1..fn`, plus `group` when present) followed by rows.
pub fn write_csv(path: &Path, data: &Dataset) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<String> = (1..=data.n_features()).map(|i| format!("f{i}")).collect();
    if data.group_ids().is_some() {
        header.push("group".into());
    }
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (i, row) in data.rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(g) = data.group_of(i) {
            rec.push(g.to_owned());
        }
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| IngestError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> IngestError {
    if let csv::ErrorKind::Io(_) = e.kind() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => IngestError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        IngestError::Csv { path: path.to_path_buf(), message: e.to_string() }
    }
}
