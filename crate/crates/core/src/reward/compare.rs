//! Comparison programs: the input code extended with two lemmas whose
//! verification certifies the precondition and postcondition implications
//! for one method.

use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::symbols::{type_param_names, unbound_names};
use crate::source::{conjoin, ClauseSet, MethodUnit, Param, SourceFile};
use crate::verifier::{Severity, VerificationOutcome, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum CompareError {
    #[error("heap-dependent specification: {0}")]
    UnsupportedSpec(String),
    #[error("`{name}` in `{clause}` cannot be bound from the method's parameters or results")]
    UnknownSymbol { clause: String, name: String },
    #[error("no unit `{0}` in the input code")]
    UnknownUnit(String),
}

/// Where one generated lemma sits in the emitted program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LemmaSite {
    pub name: String,
    /// 1-based, inclusive.
    pub lines: RangeInclusive<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonProgram {
    pub text: String,
    /// Ground-truth precondition implies generated precondition.
    pub pre_check: LemmaSite,
    /// Under the ground-truth precondition, generated postcondition implies
    /// ground-truth postcondition.
    pub post_check: LemmaSite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckVerdict {
    Proved,
    Refuted,
    /// The solver gave up or the run was cut short.
    Inconclusive,
    /// The comparison program itself did not parse or resolve.
    Error,
    Unchecked,
}

fn fresh_name(base: &str, taken: &BTreeSet<String>) -> String {
    let stem: String = base
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if !taken.contains(&stem) {
        return stem;
    }
    (1..)
        .map(|n| format!("{stem}_{n}"))
        .find(|c| !taken.contains(c))
        .expect("unbounded suffixes")
}

pub fn check_bound(clauses: &[String], known: &BTreeSet<String>) -> Result<(), CompareError> {
    for clause in clauses {
        if let Some(name) = unbound_names(clause, known).into_iter().next() {
            return Err(CompareError::UnknownSymbol {
                clause: clause.clone(),
                name,
            });
        }
    }
    Ok(())
}

fn render_params(params: &[&Param]) -> String {
    params
        .iter()
        .map(|p| format!("{}: {}", p.name, p.ty))
        .collect::<Vec<_>>()
        .join(", ")
}

fn line_indent(text: &str, pos: usize) -> &str {
    let start = text[..pos].rfind('\n').map_or(0, |i| i + 1);
    let line = &text[start..];
    &line[..line.len() - line.trim_start_matches([' ', '\t']).len()]
}

struct LemmaText<'a> {
    indent: &'a str,
    is_static: bool,
    name: &'a str,
    type_params: &'a str,
    params: String,
    requires: Vec<String>,
    ensures: String,
}

impl LemmaText<'_> {
    fn render(&self) -> String {
        let i = self.indent;
        let mut s = format!(
            "{i}{}lemma {}{}({})\n",
            if self.is_static { "static " } else { "" },
            self.name,
            self.type_params,
            self.params
        );
        for r in &self.requires {
            s.push_str(&format!("{i}  requires {r}\n"));
        }
        s.push_str(&format!("{i}  ensures {}\n{i}{{\n{i}}}", self.ensures));
        s
    }
}

/// One lemma to emit next to a unit.
#[derive(Debug, Clone)]
pub struct LemmaSpec {
    pub base_name: String,
    /// Bind the unit's named results as well as its parameters.
    pub bind_results: bool,
    pub requires: Vec<String>,
    pub ensures: String,
}

/// Inserts `lemmas` right after `unit` in `code`, in the same scope and with
/// the unit's type parameters. Each lemma has an empty body so the verifier
/// must prove its postcondition from its preconditions.
pub fn emit_lemmas(code: &SourceFile, unit: &MethodUnit, lemmas: &[LemmaSpec]) -> (String, Vec<LemmaSite>) {
    let type_params = unit.type_params.clone().unwrap_or_default();
    let indent = line_indent(&code.text, unit.span.start);
    let mut taken = code.declared_names.clone();
    let at = unit.span.end;
    let head = &code.text[..at];
    let mut line = head.matches('\n').count() as u32 + 1;
    let mut text = head.to_string();
    let mut sites = Vec::new();
    for spec in lemmas {
        let name = fresh_name(&spec.base_name, &taken);
        taken.insert(name.clone());
        let params: Vec<&Param> = if spec.bind_results {
            unit.bindings().collect()
        } else {
            unit.params.iter().collect()
        };
        let rendered = LemmaText {
            indent,
            is_static: unit.is_static,
            name: &name,
            type_params: &type_params,
            params: render_params(&params),
            requires: spec.requires.clone(),
            ensures: spec.ensures.clone(),
        }
        .render();
        // A blank line separates each lemma from what precedes it.
        let start = line + 2;
        let end = start + rendered.matches('\n').count() as u32;
        text.push_str("\n\n");
        text.push_str(&rendered);
        sites.push(LemmaSite { name, lines: start..=end });
        line = end;
    }
    text.push_str(&code.text[at..]);
    (text, sites)
}

/// Names a clause may use: declarations in `code`, the unit's type
/// parameters, its parameters, and (when `results`) its named results.
pub fn bindable_names(code: &SourceFile, unit: &MethodUnit, results: bool) -> BTreeSet<String> {
    let mut known = code.declared_names.clone();
    known.extend(type_param_names(unit.type_params.as_deref().unwrap_or("")));
    known.extend(unit.params.iter().map(|p| p.name.clone()));
    if results {
        known.extend(unit.returns.iter().map(|p| p.name.clone()));
    }
    known
}

/// Extends `code` with the two comparison lemmas for `method`.
pub fn build_comparison_program(
    code: &SourceFile,
    gt: &ClauseSet,
    gen: &ClauseSet,
    method: &MethodUnit,
) -> Result<ComparisonProgram, CompareError> {
    if gt.heap_dependent || gen.heap_dependent {
        let side = if gt.heap_dependent { "ground truth" } else { "candidate" };
        return Err(CompareError::UnsupportedSpec(format!(
            "{side} of `{}` uses old/fresh/unchanged/allocated or a modifies/reads frame",
            method.qualified_name
        )));
    }
    let unit = code
        .unit(&method.qualified_name)
        .ok_or_else(|| CompareError::UnknownUnit(method.qualified_name.clone()))?;

    let with_params = bindable_names(code, unit, false);
    let with_results = bindable_names(code, unit, true);
    check_bound(&gt.pre, &with_params)?;
    check_bound(&gen.pre, &with_params)?;
    check_bound(&gen.post, &with_results)?;
    check_bound(&gt.post, &with_results)?;

    let lemmas = [
        LemmaSpec {
            base_name: format!("SpecCmpPre_{}", unit.name),
            bind_results: false,
            requires: vec![conjoin(&gt.pre)],
            ensures: conjoin(&gen.pre),
        },
        LemmaSpec {
            base_name: format!("SpecCmpPost_{}", unit.name),
            bind_results: true,
            requires: vec![conjoin(&gt.pre), conjoin(&gen.post)],
            ensures: conjoin(&gt.post),
        },
    ];
    let (text, mut sites) = emit_lemmas(code, unit, &lemmas);
    let post_check = sites.pop().expect("two lemmas");
    let pre_check = sites.pop().expect("two lemmas");
    Ok(ComparisonProgram {
        text,
        pre_check,
        post_check,
    })
}

fn is_resource_limit(message: &str) -> bool {
    let m = message.to_ascii_lowercase();
    m.contains("timed out") || m.contains("time out") || m.contains("out of resource")
}

fn site_verdict(outcome: &VerificationOutcome, site: &LemmaSite) -> CheckVerdict {
    let errors: Vec<_> = outcome
        .diagnostics
        .iter()
        .filter(|d| d.severity == Severity::Error && site.lines.contains(&d.line))
        .collect();
    if errors.iter().any(|d| is_resource_limit(&d.message)) {
        CheckVerdict::Inconclusive
    } else if !errors.is_empty() {
        CheckVerdict::Refuted
    } else if outcome.verdict == Verdict::Timeout {
        // Output may be partial; silence is not proof.
        CheckVerdict::Inconclusive
    } else {
        CheckVerdict::Proved
    }
}

/// Verdict for one lemma of a checked program.
pub fn check_verdict(outcome: &VerificationOutcome, site: &LemmaSite) -> CheckVerdict {
    match outcome.verdict {
        Verdict::Verified => CheckVerdict::Proved,
        Verdict::SyntaxError | Verdict::TypeError | Verdict::ToolError => CheckVerdict::Error,
        Verdict::VerificationFailed | Verdict::Timeout => site_verdict(outcome, site),
    }
}

/// Per-lemma verdicts. Errors are attributed by line, so failures elsewhere
/// in the input code do not affect either check.
pub fn interpret(program: &ComparisonProgram, outcome: &VerificationOutcome) -> (CheckVerdict, CheckVerdict) {
    (
        check_verdict(outcome, &program.pre_check),
        check_verdict(outcome, &program.post_check),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::extract_clause_sets;
    use crate::verifier::Diagnostic;

    const SUM: &str = "method Sum(n: int) returns (s: int)
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

    fn set(pre: &[&str], post: &[&str]) -> ClauseSet {
        ClauseSet {
            pre: pre.iter().map(|s| s.to_string()).collect(),
            post: post.iter().map(|s| s.to_string()).collect(),
            heap_dependent: false,
        }
    }

    fn lines_of<'a>(text: &'a str, site: &LemmaSite) -> Vec<&'a str> {
        let all: Vec<&str> = text.lines().collect();
        all[(*site.lines.start() as usize - 1)..=(*site.lines.end() as usize - 1)].to_vec()
    }

    #[test]
    fn sum_lemmas() {
        let code = SourceFile::parse(SUM);
        let gt = extract_clause_sets(&code.units[0]);
        let gen = set(&[], &["s == n * (n + 1) / 2"]);
        let p = build_comparison_program(&code, &gt, &gen, &code.units[0]).unwrap();
        assert_eq!(
            lines_of(&p.text, &p.pre_check),
            vec!["lemma SpecCmpPre_Sum(n: int)", "  requires (n >= -1)", "  ensures true", "{", "}"]
        );
        assert_eq!(
            lines_of(&p.text, &p.post_check),
            vec![
                "lemma SpecCmpPost_Sum(n: int, s: int)",
                "  requires (n >= -1)",
                "  requires (s == n * (n + 1) / 2)",
                "  ensures (s == n * (n + 1) / 2)",
                "{",
                "}"
            ]
        );
        let reparsed = SourceFile::parse(&p.text);
        assert_eq!(reparsed.units.len(), 3);
        assert!(p.text.starts_with(SUM.trim_end()));
        let post = reparsed.unit("SpecCmpPost_Sum").unwrap();
        assert_eq!(extract_clause_sets(post).post, vec!["(s == n * (n + 1) / 2)"]);
    }

    #[test]
    fn reflexive_construction() {
        let code = SourceFile::parse(SUM);
        let gt = extract_clause_sets(&code.units[0]);
        let p = build_comparison_program(&code, &gt, &gt, &code.units[0]).unwrap();
        let pre = lines_of(&p.text, &p.pre_check);
        assert_eq!(pre[1].trim_start().strip_prefix("requires "), pre[2].trim_start().strip_prefix("ensures "));
    }

    #[test]
    fn heap_specs_are_unsupported() {
        let code = SourceFile::parse(SUM);
        let gen = ClauseSet {
            heap_dependent: true,
            ..set(&[], &["fresh(out)"])
        };
        let err = build_comparison_program(&code, &set(&[], &[]), &gen, &code.units[0]).unwrap_err();
        assert!(matches!(err, CompareError::UnsupportedSpec(_)));
    }

    #[test]
    fn result_name_in_precondition_is_unknown() {
        let code = SourceFile::parse(SUM);
        let err = build_comparison_program(&code, &set(&[], &[]), &set(&["s > 0"], &[]), &code.units[0]).unwrap_err();
        assert_eq!(
            err,
            CompareError::UnknownSymbol {
                clause: "s > 0".into(),
                name: "s".into()
            }
        );
    }

    #[test]
    fn names_avoid_collisions_and_keep_scope() {
        let src = "class C {\n  static method Get<T>(x: T) returns (r: T)\n  {\n    r := x;\n  }\n  predicate SpecCmpPre_Get() { true }\n}\n";
        let code = SourceFile::parse(src);
        let unit = code.unit("C.Get").unwrap();
        let p = build_comparison_program(&code, &set(&[], &["r == x"]), &set(&[], &["r == x"]), unit).unwrap();
        assert_eq!(p.pre_check.name, "SpecCmpPre_Get_1");
        assert!(p.text.contains("  static lemma SpecCmpPre_Get_1<T>(x: T)\n"));
        let reparsed = SourceFile::parse(&p.text);
        assert!(reparsed.unit("C.SpecCmpPost_Get").is_some());
    }

    fn outcome(verdict: Verdict, lines: &[(u32, &str)]) -> VerificationOutcome {
        VerificationOutcome {
            verdict,
            diagnostics: lines
                .iter()
                .map(|(l, m)| Diagnostic {
                    line: *l,
                    column: 1,
                    severity: Severity::Error,
                    message: m.to_string(),
                })
                .collect(),
            wall_time: 0.0,
            from_cache: false,
        }
    }

    #[test]
    fn errors_are_attributed_by_line() {
        let code = SourceFile::parse(SUM);
        let gt = extract_clause_sets(&code.units[0]);
        let p = build_comparison_program(&code, &gt, &set(&[], &[]), &code.units[0]).unwrap();
        let post_line = *p.post_check.lines.end();
        let failing = outcome(Verdict::VerificationFailed, &[(post_line, "a postcondition could not be proved")]);
        assert_eq!(interpret(&p, &failing), (CheckVerdict::Proved, CheckVerdict::Refuted));
        let elsewhere = outcome(Verdict::VerificationFailed, &[(5, "index out of range")]);
        assert_eq!(interpret(&p, &elsewhere), (CheckVerdict::Proved, CheckVerdict::Proved));
        let slow = outcome(Verdict::Timeout, &[(post_line, "Verification of 'X' timed out after 20 seconds")]);
        assert_eq!(interpret(&p, &slow), (CheckVerdict::Inconclusive, CheckVerdict::Inconclusive));
        assert_eq!(
            interpret(&p, &outcome(Verdict::TypeError, &[])),
            (CheckVerdict::Error, CheckVerdict::Error)
        );
    }
}
