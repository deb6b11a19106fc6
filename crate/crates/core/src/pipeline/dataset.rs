//! JSON-lines corpus of annotated Dafny programs.
//!
//! One object per line: `id` (string), `code_with_specs` (string),
//! `code_stripped` (string, optional), `source` (string, optional),
//! `token_counts` (object of string to integer, optional). Blank lines are
//! skipped.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::source::{extract_clause_sets, strip_specs, ClauseSet, SourceFile};

#[derive(Debug, Clone, Deserialize)]
struct RawRecord {
    id: String,
    code_with_specs: String,
    #[serde(default)]
    code_stripped: Option<String>,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    token_counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    /// Input code: the annotated program with its specifications removed.
    pub code: String,
    pub code_with_specs: String,
    /// Ground-truth clause sets by qualified unit name.
    pub gt_spec: BTreeMap<String, ClauseSet>,
    pub source: Option<String>,
    pub token_counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub records: Vec<DatasetRecord>,
    pub errors: Vec<LineError>,
}

#[derive(Debug, Error)]
#[error("reading {path}: {source}")]
pub struct IngestIoError {
    pub path: String,
    pub source: std::io::Error,
}

pub fn ingest_dataset(path: &Path) -> Result<IngestReport, IngestIoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestIoError {
        path: path.display().to_string(),
        source,
    })?;
    Ok(ingest_str(&text))
}

pub fn ingest_str(text: &str) -> IngestReport {
    let mut report = IngestReport::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line) {
            Ok(r) => report.records.push(r),
            Err(message) => {
                tracing::warn!(line = i + 1, %message, "skipping dataset line");
                report.errors.push(LineError { line: i + 1, message });
            }
        }
    }
    report
}

fn parse_line(line: &str) -> Result<DatasetRecord, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let file = SourceFile::parse_with_id(&raw.id, &raw.code_with_specs);
    if !file.is_well_formed() {
        return Err(format!("code_with_specs does not parse: {:?}", file.issues));
    }
    if file.units.is_empty() {
        return Err("code_with_specs declares no method, function or lemma".into());
    }
    let gt_spec: BTreeMap<_, _> = file
        .units
        .iter()
        .map(|u| (u.qualified_name.clone(), extract_clause_sets(u)))
        .collect();
    if gt_spec.values().all(ClauseSet::is_empty) {
        return Err("code_with_specs has no requires/ensures clauses".into());
    }
    let code = match raw.code_stripped {
        Some(c) => {
            if !SourceFile::parse(&c).is_well_formed() {
                return Err("code_stripped does not parse".into());
            }
            c
        }
        None => strip_specs(&file),
    };
    Ok(DatasetRecord {
        id: raw.id,
        code,
        code_with_specs: raw.code_with_specs,
        gt_spec,
        source: raw.source,
        token_counts: raw.token_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    const ABS: &str = "method Abs(x: int) returns (y: int)\n  ensures y >= 0\n{\n  y := if x < 0 then -x else x;\n}\n";

    fn line(id: &str, code: &str) -> String {
        json!({"id": id, "code_with_specs": code, "source": "unit"}).to_string()
    }

    #[test]
    fn three_good_lines() {
        let text = [line("a", ABS), line("b", ABS), line("c", ABS)].join("\n");
        let r = ingest_str(&text);
        assert_eq!((r.records.len(), r.errors.len()), (3, 0));
        assert_eq!(r.records[0].gt_spec["Abs"].post, vec!["y >= 0"]);
    }

    #[test]
    fn unparseable_line_is_skipped_and_counted() {
        let text = [line("a", ABS), line("b", "method M() { {"), "{not json".into(), line("c", ABS)].join("\n");
        let r = ingest_str(&text);
        assert_eq!(r.records.iter().map(|x| x.id.as_str()).collect::<Vec<_>>(), vec!["a", "c"]);
        assert_eq!(r.errors.iter().map(|e| e.line).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn stripped_code_is_derived() {
        let r = ingest_str(&line("a", ABS));
        assert_eq!(r.records[0].code, strip_specs(&SourceFile::parse(ABS)));
        assert!(!r.records[0].code.contains("ensures"));
    }

    #[test]
    fn explicit_stripped_code_is_kept() {
        let stripped = "method Abs(x: int) returns (y: int) { y := x; }\n";
        let text = json!({"id": "a", "code_with_specs": ABS, "code_stripped": stripped, "token_counts": {"input": 12}}).to_string();
        let r = ingest_str(&text);
        assert_eq!(r.records[0].code, stripped);
        assert_eq!(r.records[0].token_counts["input"], 12);
    }

    #[test]
    fn spec_free_program_is_rejected() {
        let r = ingest_str(&line("a", "method M() {}\n"));
        assert_eq!(r.errors.len(), 1);
    }
}
