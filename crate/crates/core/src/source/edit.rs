//! Exact-span edits: removing every specification clause, putting removed
//! clauses back, and splicing new clauses into one unit.

use thiserror::Error;

use super::{SourceFile, SpecClause};

/// Text removed by [`strip_specs_with_anchors`], positioned in the stripped output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StripAnchor {
    pub offset: usize,
    pub removed: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripped {
    pub text: String,
    pub anchors: Vec<StripAnchor>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpliceError {
    #[error("no unit named `{0}`")]
    UnknownUnit(String),
}

/// Byte range removed for a clause: the clause plus the horizontal
/// whitespace before it, and the preceding line break when the clause
/// starts its own line.
fn removal_range(text: &str, clause: &SpecClause) -> std::ops::Range<usize> {
    let bytes = text.as_bytes();
    let mut start = clause.span.start;
    while start > 0 && matches!(bytes[start - 1], b' ' | b'\t') {
        start -= 1;
    }
    if start > 0 && bytes[start - 1] == b'\n' {
        start -= 1;
        if start > 0 && bytes[start - 1] == b'\r' {
            start -= 1;
        }
    }
    start..clause.span.end
}

pub fn strip_specs(file: &SourceFile) -> String {
    strip_specs_with_anchors(file).text
}

pub fn strip_specs_with_anchors(file: &SourceFile) -> Stripped {
    let mut ranges: Vec<_> = file
        .units
        .iter()
        .flat_map(|u| u.spec_clauses.iter())
        .map(|c| removal_range(&file.text, c))
        .collect();
    ranges.sort_by_key(|r| r.start);

    let mut text = String::with_capacity(file.text.len());
    let mut anchors = Vec::with_capacity(ranges.len());
    let mut cursor = 0;
    for r in ranges {
        text.push_str(&file.text[cursor..r.start]);
        anchors.push(StripAnchor {
            offset: text.len(),
            removed: file.text[r.clone()].to_string(),
        });
        cursor = r.end;
    }
    text.push_str(&file.text[cursor..]);
    Stripped { text, anchors }
}

/// Inverse of [`strip_specs_with_anchors`].
pub fn reinsert(stripped: &Stripped) -> String {
    let mut out = String::with_capacity(
        stripped.text.len() + stripped.anchors.iter().map(|a| a.removed.len()).sum::<usize>(),
    );
    let mut cursor = 0;
    for anchor in &stripped.anchors {
        out.push_str(&stripped.text[cursor..anchor.offset]);
        out.push_str(&anchor.removed);
        cursor = anchor.offset;
    }
    out.push_str(&stripped.text[cursor..]);
    out
}

fn line_indent(text: &str, pos: usize) -> &str {
    let line_start = text[..pos].rfind('\n').map_or(0, |i| i + 1);
    let line = &text[line_start..];
    let width = line.len() - line.trim_start_matches([' ', '\t']).len();
    &line[..width]
}

/// Inserts `clauses` after the named unit's existing method-level clauses
/// (or after its signature), one per line.
pub fn splice(file: &SourceFile, unit_name: &str, clauses: &[SpecClause]) -> Result<String, SpliceError> {
    let unit = file
        .unit(unit_name)
        .ok_or_else(|| SpliceError::UnknownUnit(unit_name.to_string()))?;
    if clauses.is_empty() {
        return Ok(file.text.clone());
    }
    let existing = unit.method_clauses().last();
    let at = existing.map_or(unit.signature_span.end, |c| c.span.end);
    let indent = match unit.method_clauses().next() {
        Some(first) => line_indent(&file.text, first.span.start).to_string(),
        None => format!("{}  ", line_indent(&file.text, unit.signature_span.start)),
    };
    let mut inserted = String::new();
    for clause in clauses {
        inserted.push('\n');
        inserted.push_str(&indent);
        inserted.push_str(&clause.render());
    }
    let mut out = String::with_capacity(file.text.len() + inserted.len());
    out.push_str(&file.text[..at]);
    out.push_str(&inserted);
    out.push_str(&file.text[at..]);
    Ok(out)
}
