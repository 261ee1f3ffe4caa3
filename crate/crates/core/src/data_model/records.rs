use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde_json::Value;

use super::RunRecord;
use crate::error::{Error, Result};

/// Writes one JSON object per line. Nothing is written if the batch fails
/// validation.
pub fn write_records<W: Write>(records: &[RunRecord], mut sink: W) -> Result<usize> {
    let mut seen = HashSet::new();
    for record in records {
        if !seen.insert(record.record_id.as_str()) {
            return Err(Error::validation(format!("duplicate record_id {:?}", record.record_id)));
        }
        // serde_json silently turns non-finite floats into null, which would
        // not read back.
        if let Some(s) = record
            .samples
            .iter()
            .flat_map(|s| s.external_scores.values().chain(&s.token_logprobs))
            .find(|v| !v.is_finite())
        {
            return Err(Error::Format(format!(
                "record {}: non-finite value {s} cannot be encoded",
                record.record_id
            )));
        }
        if !record.temperature.is_finite() {
            return Err(Error::Format(format!(
                "record {}: non-finite temperature cannot be encoded",
                record.record_id
            )));
        }
    }
    for record in records {
        serde_json::to_writer(&mut sink, record)
            .map_err(|e| Error::Format(format!("record {}: {e}", record.record_id)))?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(records.len())
}

/// Parses one line without checking record invariants. `line_no` is 1-based.
pub(crate) fn parse_record_line(line: &str, line_no: usize) -> Result<RunRecord> {
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let Value::Object(map) = &value else {
        return Err(Error::Parse {
            line: line_no,
            message: "expected a JSON object".into(),
        });
    };
    for key in map.keys() {
        if !RunRecord::FIELDS.contains(&key.as_str()) {
            log::warn!("line {line_no}: ignoring unknown record field {key:?}");
        }
    }
    serde_json::from_value(value).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })
}

/// Reads a JSON-lines records file. Blank lines are skipped; unknown fields
/// are ignored with a warning.
pub fn read_records<R: BufRead>(source: R) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record_line(&line, idx + 1)?;
        record.validate()?;
        if !seen.insert(record.record_id.clone()) {
            return Err(Error::validation(format!("duplicate record_id {:?}", record.record_id)));
        }
        records.push(record);
    }
    Ok(records)
}
