//! Newline-delimited JSON with a schema header line.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::IoError;

pub const SCHEMA_VERSION: &str = "1";

pub const QA_SCHEMA: &str = "spatial-qa/qa";
pub const COT_SCHEMA: &str = "spatial-qa/cot";
pub const VARIANT_SCHEMA: &str = "spatial-qa/circular-variant";
pub const PREDICTION_SCHEMA: &str = "spatial-qa/prediction";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub schema_version: String,
}

pub fn to_jsonl_string<T: Serialize>(schema: &str, records: &[T]) -> String {
    let mut out = serde_json::to_string(&Header { schema: schema.into(), schema_version: SCHEMA_VERSION.into() })
        .expect("header serializes");
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Writes the header and one line per record; returns the record count.
pub fn write_jsonl<T: Serialize>(path: &Path, schema: &str, records: &[T]) -> Result<usize, IoError> {
    let file = std::fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(to_jsonl_string(schema, records).as_bytes()).map_err(|e| IoError::io(path, e))?;
    w.flush().map_err(|e| IoError::io(path, e))?;
    Ok(records.len())
}

/// Reads records, skipping blank lines. A header line is optional, but if
/// present it must name `schema` and the supported version.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<Vec<T>, IoError> {
    let file = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IoError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if out.is_empty() && line.contains("\"schema_version\"") {
            if let Ok(h) = serde_json::from_str::<Header>(&line) {
                if h.schema != schema || h.schema_version != SCHEMA_VERSION {
                    return Err(IoError::Schema {
                        file: name,
                        field: "schema".into(),
                        line: Some(i + 1),
                        message: format!(
                            "expected {schema} v{SCHEMA_VERSION}, found {} v{}",
                            h.schema, h.schema_version
                        ),
                    });
                }
                continue;
            }
        }
        let de = &mut serde_json::Deserializer::from_str(&line);
        let rec: T = serde_path_to_error::deserialize(de).map_err(|e| IoError::Schema {
            file: name.clone(),
            field: e.path().to_string(),
            line: Some(i + 1),
            message: e.inner().to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Number of record lines (header excluded) in a JSONL file.
pub fn count_records(path: &Path) -> Result<usize, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty() && !l.contains("\"schema_version\"")).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        qa_id: String,
        #[serde(default)]
        variant_rotation: usize,
        raw_text: String,
    }

    #[test]
    fn header_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        let rows = vec![Row { qa_id: "a".into(), variant_rotation: 1, raw_text: "B".into() }];
        write_jsonl(&p, PREDICTION_SCHEMA, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.lines().next().unwrap().contains("\"schema_version\":\"1\""));
        assert_eq!(read_jsonl::<Row>(&p, PREDICTION_SCHEMA).unwrap(), rows);
        assert_eq!(count_records(&p).unwrap(), 1);
        assert!(matches!(read_jsonl::<Row>(&p, QA_SCHEMA), Err(IoError::Schema { .. })));
    }

    #[test]
    fn missing_field_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.jsonl");
        std::fs::write(&p, "{\"qa_id\":\"a\",\"raw_text\":\"A\"}\n{\"raw_text\":\"B\"}\n").unwrap();
        match read_jsonl::<Row>(&p, PREDICTION_SCHEMA).unwrap_err() {
            IoError::Schema { line, message, .. } => {
                assert_eq!(line, Some(2));
                assert!(message.contains("qa_id"));
            }
            e => panic!("{e}"),
        }
    }
}
