//! Lexical and bracket-structural view of Dafny source.
//!
//! The parser identifies methods, functions, lemmas and constructors with
//! their signatures, specification clauses and body extents. It never fails:
//! regions it does not recognize are simply not covered by any unit.

mod edit;
pub mod lexer;
mod parse;

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use edit::{reinsert, splice, strip_specs, strip_specs_with_anchors, SpliceError, StripAnchor, Stripped};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Method,
    Function,
    Lemma,
    Constructor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseKind {
    Requires,
    Ensures,
    Invariant,
    Decreases,
    Modifies,
    Reads,
}

impl ClauseKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ClauseKind::Requires => "requires",
            ClauseKind::Ensures => "ensures",
            ClauseKind::Invariant => "invariant",
            ClauseKind::Decreases => "decreases",
            ClauseKind::Modifies => "modifies",
            ClauseKind::Reads => "reads",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Some(match word {
            "requires" => ClauseKind::Requires,
            "ensures" => ClauseKind::Ensures,
            "invariant" => ClauseKind::Invariant,
            "decreases" => ClauseKind::Decreases,
            "modifies" => ClauseKind::Modifies,
            "reads" => ClauseKind::Reads,
            _ => return None,
        })
    }
}

impl fmt::Display for ClauseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// One specification clause. Clauses inside a body belong to the loop with
/// index `attached_loop` (loops counted in body order, from zero).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecClause {
    pub kind: ClauseKind,
    pub expr_text: String,
    pub span: Range<usize>,
    pub attached_loop: Option<usize>,
}

impl SpecClause {
    /// A clause not tied to any source position, for insertion with [`splice`].
    pub fn detached(kind: ClauseKind, expr: impl Into<String>) -> Self {
        SpecClause {
            kind,
            expr_text: expr.into(),
            span: 0..0,
            attached_loop: None,
        }
    }

    pub fn render(&self) -> String {
        format!("{} {}", self.kind, self.expr_text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodUnit {
    pub name: String,
    /// `Class.Method` for members, plain name at top level.
    pub qualified_name: String,
    pub kind: UnitKind,
    /// Whole declaration including modifiers, clauses and body.
    pub span: Range<usize>,
    pub signature_span: Range<usize>,
    pub type_params: Option<String>,
    pub params: Vec<Param>,
    pub returns: Vec<Param>,
    /// Unnamed function result type, if any.
    pub result_type: Option<String>,
    pub is_static: bool,
    /// Enclosing module/class/trait/datatype names, outermost first.
    pub scope: Vec<String>,
    /// Method-level clauses first appear between signature and body; loop
    /// clauses lie inside the body and carry `attached_loop`.
    pub spec_clauses: Vec<SpecClause>,
    pub body_span: Option<Range<usize>>,
}

impl MethodUnit {
    pub fn method_clauses(&self) -> impl Iterator<Item = &SpecClause> {
        self.spec_clauses.iter().filter(|c| c.attached_loop.is_none())
    }

    pub fn loop_clauses(&self) -> impl Iterator<Item = &SpecClause> {
        self.spec_clauses.iter().filter(|c| c.attached_loop.is_some())
    }

    pub fn signature<'a>(&self, text: &'a str) -> &'a str {
        &text[self.signature_span.clone()]
    }

    /// Signature with whitespace runs collapsed, for textual comparison.
    pub fn normalized_signature(&self, text: &str) -> String {
        normalize_ws(self.signature(text))
    }

    /// Parameters followed by named results.
    pub fn bindings(&self) -> impl Iterator<Item = &Param> {
        self.params.iter().chain(self.returns.iter())
    }
}

/// Requires/ensures of one unit, each list read as a conjunction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseSet {
    pub pre: Vec<String>,
    pub post: Vec<String>,
    pub heap_dependent: bool,
}

impl ClauseSet {
    pub fn pre_predicate(&self) -> String {
        conjoin(&self.pre)
    }

    pub fn post_predicate(&self) -> String {
        conjoin(&self.post)
    }

    pub fn is_empty(&self) -> bool {
        self.pre.is_empty() && self.post.is_empty()
    }
}

/// Flattens stacked clauses into one predicate; the empty list is `true`.
pub fn conjoin(exprs: &[String]) -> String {
    match exprs {
        [] => "true".to_string(),
        [one] => format!("({})", one.trim()),
        many => many
            .iter()
            .map(|e| format!("({})", e.trim()))
            .collect::<Vec<_>>()
            .join(" && "),
    }
}

/// Tokens that make a clause two-state or allocation-dependent.
pub const HEAP_TOKENS: &[&str] = &["old", "fresh", "unchanged", "allocated"];

pub fn extract_clause_sets(unit: &MethodUnit) -> ClauseSet {
    let mut set = ClauseSet::default();
    for clause in unit.method_clauses() {
        match clause.kind {
            ClauseKind::Requires => set.pre.push(clause.expr_text.clone()),
            ClauseKind::Ensures => set.post.push(clause.expr_text.clone()),
            ClauseKind::Modifies | ClauseKind::Reads => set.heap_dependent = true,
            ClauseKind::Decreases | ClauseKind::Invariant => {}
        }
        if matches!(clause.kind, ClauseKind::Requires | ClauseKind::Ensures)
            && mentions_heap(&clause.expr_text)
        {
            set.heap_dependent = true;
        }
    }
    set
}

pub fn mentions_heap(expr: &str) -> bool {
    let (tokens, _) = lexer::tokenize(expr);
    tokens
        .iter()
        .any(|t| t.kind == lexer::TokenKind::Ident && HEAP_TOKENS.contains(&t.text(expr)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StructuralIssue {
    UnterminatedComment { offset: usize },
    UnterminatedString { offset: usize },
    UnmatchedOpen { offset: usize },
    UnmatchedClose { offset: usize },
    EmptyClause { offset: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub id: String,
    pub text: String,
    pub units: Vec<MethodUnit>,
    /// Every name declared anywhere in the file: units, types, datatype
    /// constructors, constants, fields, modules and import aliases.
    pub declared_names: BTreeSet<String>,
    pub content_hash: String,
    pub issues: Vec<StructuralIssue>,
}

impl SourceFile {
    pub fn parse(text: &str) -> Self {
        Self::parse_with_id("<memory>", text)
    }

    pub fn parse_with_id(id: impl Into<String>, text: &str) -> Self {
        let parsed = parse::parse_units(text);
        SourceFile {
            id: id.into(),
            text: text.to_string(),
            units: parsed.units,
            declared_names: parsed.declared,
            content_hash: content_hash(text),
            issues: parsed.issues,
        }
    }

    /// Finds a unit by qualified name, or by bare name when that is unique.
    pub fn unit(&self, name: &str) -> Option<&MethodUnit> {
        if let Some(u) = self.units.iter().find(|u| u.qualified_name == name) {
            return Some(u);
        }
        let mut bare = self.units.iter().filter(|u| u.name == name);
        match (bare.next(), bare.next()) {
            (Some(u), None) => Some(u),
            _ => None,
        }
    }

    /// Balanced delimiters, terminated literals, and at least one unit.
    pub fn is_well_formed(&self) -> bool {
        self.issues
            .iter()
            .all(|i| matches!(i, StructuralIssue::EmptyClause { .. }))
            && !self.units.is_empty()
    }

    /// Rebuilds the text from unit spans and the gaps between them.
    pub fn serialize(&self) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut cursor = 0;
        for unit in &self.units {
            out.push_str(&self.text[cursor..unit.span.start]);
            out.push_str(&self.text[unit.span.clone()]);
            cursor = unit.span.end;
        }
        out.push_str(&self.text[cursor..]);
        out
    }
}

/// Canonicalizes line endings only.
pub fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(normalize_newlines(text).as_bytes()))
}

pub fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SUM: &str = "method Sum(n: int) returns (s: int)
  requires n >= -1
  ensures s == n * (n + 1) / 2
{
    var i := 0;
    s := 0;
    while i <= n
      invariant s == i * (i - 1) / 2
      invariant 0 <= i <= n + 1
    {
        s := s + i;
        i := i + 1;
    }
}
";

    #[test]
    fn sum_has_expected_clauses() {
        let file = SourceFile::parse(SUM);
        assert_eq!(file.units.len(), 1);
        let unit = &file.units[0];
        assert_eq!(unit.name, "Sum");
        assert_eq!(unit.kind, UnitKind::Method);
        let count = |k| unit.spec_clauses.iter().filter(|c| c.kind == k).count();
        assert_eq!(count(ClauseKind::Requires), 1);
        assert_eq!(count(ClauseKind::Ensures), 1);
        assert_eq!(count(ClauseKind::Invariant), 2);
        assert!(unit.loop_clauses().all(|c| c.attached_loop == Some(0)));
        assert_eq!(unit.params, vec![Param { name: "n".into(), ty: "int".into() }]);
        assert_eq!(unit.returns, vec![Param { name: "s".into(), ty: "int".into() }]);
    }

    #[test]
    fn sum_clause_sets() {
        let file = SourceFile::parse(SUM);
        let set = extract_clause_sets(&file.units[0]);
        assert_eq!(set.pre, vec!["n >= -1"]);
        assert_eq!(set.post, vec!["s == n * (n + 1) / 2"]);
        assert!(!set.heap_dependent);
    }

    #[test]
    fn empty_input_has_no_units() {
        let file = SourceFile::parse("");
        assert!(file.units.is_empty());
        assert!(!file.is_well_formed());
    }

    #[test]
    fn vacuous_spec_is_true() {
        let file = SourceFile::parse("method M(x: int) returns (y: int) { y := x; }");
        let set = extract_clause_sets(&file.units[0]);
        assert!(set.is_empty());
        assert_eq!(set.pre_predicate(), "true");
        assert_eq!(set.post_predicate(), "true");
    }

    #[test]
    fn fresh_marks_heap_dependence() {
        let src = "method Make(n: nat) returns (mask: array<bool>)\n  ensures fresh(mask)\n  ensures mask.Length == n\n{\n  mask := new bool[n];\n}\n";
        let file = SourceFile::parse(src);
        assert!(extract_clause_sets(&file.units[0]).heap_dependent);
    }

    #[test]
    fn modifies_and_reads_mark_heap_dependence() {
        let src = "method Inc(a: array<int>)\n  modifies a\n{\n}\nfunction F(a: array<int>): int\n  reads a\n{ 0 }\n";
        let file = SourceFile::parse(src);
        assert!(file.units.iter().all(|u| extract_clause_sets(u).heap_dependent));
    }

    #[test]
    fn identifiers_containing_old_are_not_heap_tokens() {
        assert!(!mentions_heap("threshold > bold_value"));
        assert!(mentions_heap("x == old(x) + 1"));
    }

    #[test]
    fn conjunction_parenthesizes() {
        let exprs = vec!["a ==> b".to_string(), "c".to_string()];
        assert_eq!(conjoin(&exprs), "(a ==> b) && (c)");
    }

    #[test]
    fn content_hash_ignores_line_ending_style() {
        assert_eq!(content_hash("a\r\nb\n"), content_hash("a\nb\n"));
        assert_ne!(content_hash("a\nb"), content_hash("a b"));
    }

    #[test]
    fn lookup_by_bare_name_requires_uniqueness() {
        let src = "class A { method M() {} }\nclass B { method M() {} }\nmethod N() {}\n";
        let file = SourceFile::parse(src);
        assert!(file.unit("M").is_none());
        assert_eq!(file.unit("B.M").unwrap().scope, vec!["B"]);
        assert!(file.unit("N").is_some());
    }
}
