//! Rule-based rewards for a candidate annotated program: syntax,
//! verification, and the subset reward certified by two implication checks
//! per ground-truth method.

mod compare;
mod symbols;

use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compare::{
    bindable_names, build_comparison_program, check_bound, check_verdict, emit_lemmas, interpret, CheckVerdict,
    CompareError, ComparisonProgram, LemmaSite, LemmaSpec,
};
pub use symbols::{type_param_names, unbound_names};

use crate::source::{extract_clause_sets, ClauseSet, SourceFile};
use crate::verifier::{Gateway, VerificationOutcome, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    SyntaxError,
    SyntaxCorrect,
    Verified,
    VerifiedSuperior,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodComparison {
    pub method: String,
    pub gt: ClauseSet,
    pub gen: ClauseSet,
    pub pre_relaxation: CheckVerdict,
    pub post_strengthening: CheckVerdict,
    /// Why the checks were not run; both verdicts are then `Unchecked`.
    pub unsupported_reason: Option<String>,
}

impl MethodComparison {
    pub fn passes(&self) -> bool {
        self.pre_relaxation == CheckVerdict::Proved && self.post_strengthening == CheckVerdict::Proved
    }

    fn unchecked(method: &str, gt: ClauseSet, gen: ClauseSet, reason: String) -> Self {
        MethodComparison {
            method: method.to_string(),
            gt,
            gen,
            pre_relaxation: CheckVerdict::Unchecked,
            post_strengthening: CheckVerdict::Unchecked,
            unsupported_reason: Some(reason),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub syntax: f64,
    pub verify: f64,
    pub subset: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            syntax: 1.0,
            verify: 1.0,
            subset: 1.0,
        }
    }
}

impl std::str::FromStr for RewardWeights {
    type Err = String;

    /// `"1,1,1"`: syntax, verification and subset weights.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("weight `{p}`: {e}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [syntax, verify, subset] if parts.iter().all(|w| w.is_finite()) => Ok(RewardWeights { syntax, verify, subset }),
            _ => Err(format!("expected three finite comma-separated weights, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub syntax_ok: bool,
    pub verified_ok: bool,
    pub subset_ok: bool,
    pub per_method: Vec<MethodComparison>,
    pub scalar: f64,
    pub category: Category,
    /// The candidate's verification hit the time limit.
    pub timed_out: bool,
    /// Set when the verifier itself failed; no reward component is then
    /// trustworthy and all are false.
    pub error: Option<String>,
}

impl RewardBreakdown {
    pub fn is_tool_error(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewardError {
    #[error("verifier failure: {0}")]
    Tool(String),
}

fn tool_message(outcome: &VerificationOutcome) -> String {
    outcome
        .errors()
        .next()
        .map_or_else(|| "verifier failed without diagnostics".to_string(), |d| d.message.clone())
}

fn checked(outcome: VerificationOutcome) -> Result<VerificationOutcome, RewardError> {
    if outcome.verdict == Verdict::ToolError {
        Err(RewardError::Tool(tool_message(&outcome)))
    } else {
        Ok(outcome)
    }
}

pub fn syntax_reward(candidate: &str, gateway: &Gateway) -> Result<bool, RewardError> {
    let outcome = checked(gateway.verify(candidate))?;
    Ok(!matches!(outcome.verdict, Verdict::SyntaxError | Verdict::TypeError))
}

/// Returns the reward and whether the run timed out.
pub fn verification_reward(candidate: &str, gateway: &Gateway) -> Result<(bool, bool), RewardError> {
    let outcome = checked(gateway.verify(candidate))?;
    Ok((outcome.verdict == Verdict::Verified, outcome.verdict == Verdict::Timeout))
}

/// Compares every ground-truth method that carries a specification against
/// the candidate's version of it. True only if every such method proves
/// both implications.
pub fn subset_reward(
    code: &SourceFile,
    gt_annotated: &str,
    candidate: &str,
    gateway: &Gateway,
) -> (bool, Vec<MethodComparison>) {
    let gt_file = SourceFile::parse(gt_annotated);
    let cand_file = SourceFile::parse(candidate);

    let mut comparisons = Vec::new();
    let mut pending = Vec::new();
    for gt_unit in &gt_file.units {
        let gt = extract_clause_sets(gt_unit);
        if gt.is_empty() && !gt.heap_dependent {
            continue;
        }
        let name = &gt_unit.qualified_name;
        let Some(cand_unit) = cand_file.units.iter().find(|u| &u.qualified_name == name) else {
            comparisons.push(MethodComparison::unchecked(
                name,
                gt,
                ClauseSet::default(),
                "missing from candidate".into(),
            ));
            continue;
        };
        let gen = extract_clause_sets(cand_unit);
        let (want, got) = (
            gt_unit.normalized_signature(&gt_file.text),
            cand_unit.normalized_signature(&cand_file.text),
        );
        if want != got {
            let reason = format!("signature changed: expected `{want}`, found `{got}`");
            comparisons.push(MethodComparison::unchecked(name, gt, gen, reason));
            continue;
        }
        match build_comparison_program(code, &gt, &gen, gt_unit) {
            Ok(program) => {
                pending.push((comparisons.len(), program));
                comparisons.push(MethodComparison {
                    method: name.clone(),
                    gt,
                    gen,
                    pre_relaxation: CheckVerdict::Unchecked,
                    post_strengthening: CheckVerdict::Unchecked,
                    unsupported_reason: None,
                });
            }
            Err(e) => comparisons.push(MethodComparison::unchecked(name, gt, gen, e.to_string())),
        }
    }

    let texts: Vec<String> = pending.iter().map(|(_, p)| p.text.clone()).collect();
    for ((idx, program), outcome) in pending.iter().zip(gateway.verify_batch(&texts)) {
        let (pre, post) = interpret(program, &outcome);
        comparisons[*idx].pre_relaxation = pre;
        comparisons[*idx].post_strengthening = post;
    }
    let ok = comparisons.iter().all(MethodComparison::passes);
    (ok, comparisons)
}

/// Reward hierarchy with short-circuiting: verification only counts after
/// syntax passes, and the subset checks run only for verified candidates.
pub fn score(
    code: &SourceFile,
    gt_annotated: &str,
    candidate: &str,
    weights: &RewardWeights,
    gateway: &Gateway,
) -> RewardBreakdown {
    let outcome = gateway.verify(candidate);
    if outcome.verdict == Verdict::ToolError {
        return RewardBreakdown {
            syntax_ok: false,
            verified_ok: false,
            subset_ok: false,
            per_method: Vec::new(),
            scalar: 0.0,
            category: Category::SyntaxError,
            timed_out: false,
            error: Some(tool_message(&outcome)),
        };
    }
    let syntax_ok = !matches!(outcome.verdict, Verdict::SyntaxError | Verdict::TypeError);
    let verified_ok = syntax_ok && outcome.verdict == Verdict::Verified;
    let (subset_ok, per_method) = if verified_ok {
        subset_reward(code, gt_annotated, candidate, gateway)
    } else {
        (false, Vec::new())
    };
    let category = match (syntax_ok, verified_ok, subset_ok) {
        (false, _, _) => Category::SyntaxError,
        (true, false, _) => Category::SyntaxCorrect,
        (true, true, false) => Category::Verified,
        (true, true, true) => Category::VerifiedSuperior,
    };
    let indicator = |b: bool| if b { 1.0 } else { 0.0 };
    RewardBreakdown {
        syntax_ok,
        verified_ok,
        subset_ok,
        per_method,
        scalar: weights.syntax * indicator(syntax_ok)
            + weights.verify * indicator(verified_ok)
            + weights.subset * indicator(subset_ok),
        category,
        timed_out: outcome.verdict == Verdict::Timeout,
        error: None,
    }
}

/// Scores candidates concurrently; results are positionally aligned and a
/// failing candidate never affects its siblings.
pub fn score_group(
    code: &SourceFile,
    gt_annotated: &str,
    candidates: &[String],
    weights: &RewardWeights,
    gateway: &Gateway,
) -> Vec<RewardBreakdown> {
    thread::scope(|s| {
        let handles: Vec<_> = candidates
            .iter()
            .map(|c| s.spawn(move || score(code, gt_annotated, c, weights, gateway)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scoring thread panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verifier::{FnBackend, VerifierConfig};

    fn gateway(check: impl Fn(&str) -> Verdict + Send + Sync + 'static) -> Gateway {
        let backend = FnBackend::new("stub", move |t| VerificationOutcome {
            verdict: check(t),
            diagnostics: vec![],
            wall_time: 0.0,
            from_cache: false,
        });
        Gateway::with_backend(Box::new(backend), &VerifierConfig::default()).unwrap()
    }

    const CODE: &str = "method Abs(x: int) returns (y: int)\n{\n  y := if x < 0 then -x else x;\n}\n";
    const GT: &str = "method Abs(x: int) returns (y: int)\n  ensures y >= 0\n{\n  y := if x < 0 then -x else x;\n}\n";

    #[test]
    fn weights_parse() {
        assert_eq!("1, 2,0.5".parse::<RewardWeights>().unwrap(), RewardWeights { syntax: 1.0, verify: 2.0, subset: 0.5 });
        assert!("1,2".parse::<RewardWeights>().is_err());
        assert!("1,x,2".parse::<RewardWeights>().is_err());
    }

    #[test]
    fn syntax_failure_short_circuits() {
        let g = gateway(|_| Verdict::SyntaxError);
        let b = score(&SourceFile::parse(CODE), GT, "method {", &RewardWeights::default(), &g);
        assert_eq!((b.category, b.scalar), (Category::SyntaxError, 0.0));
        assert!(b.per_method.is_empty());
        assert_eq!(g.cache_stats().misses, 1);
    }

    #[test]
    fn failing_verification_is_syntax_correct() {
        let g = gateway(|_| Verdict::VerificationFailed);
        let b = score(&SourceFile::parse(CODE), GT, GT, &RewardWeights::default(), &g);
        assert_eq!((b.category, b.scalar), (Category::SyntaxCorrect, 1.0));
    }

    #[test]
    fn proved_comparisons_give_superior() {
        let g = gateway(|_| Verdict::Verified);
        let b = score(&SourceFile::parse(CODE), GT, GT, &RewardWeights::default(), &g);
        assert_eq!((b.category, b.scalar), (Category::VerifiedSuperior, 3.0));
        assert_eq!(b.per_method.len(), 1);
        assert!(b.per_method[0].passes());
    }

    #[test]
    fn refuted_post_check_gives_verified() {
        // Reports a failure on the post lemma's header line.
        let backend = FnBackend::new("stub", |t: &str| {
            let line = t.lines().position(|l| l.contains("lemma SpecCmpPost"));
            VerificationOutcome {
                verdict: if line.is_some() { Verdict::VerificationFailed } else { Verdict::Verified },
                diagnostics: line
                    .map(|l| crate::verifier::Diagnostic {
                        line: l as u32 + 1,
                        column: 1,
                        severity: crate::verifier::Severity::Error,
                        message: "a postcondition could not be proved on this return path".into(),
                    })
                    .into_iter()
                    .collect(),
                wall_time: 0.0,
                from_cache: false,
            }
        });
        let g = Gateway::with_backend(Box::new(backend), &VerifierConfig::default()).unwrap();
        let b = score(&SourceFile::parse(CODE), GT, GT, &RewardWeights::default(), &g);
        assert_eq!((b.category, b.scalar), (Category::Verified, 2.0));
        assert_eq!(b.per_method[0].pre_relaxation, CheckVerdict::Proved);
        assert_eq!(b.per_method[0].post_strengthening, CheckVerdict::Refuted);
    }

    #[test]
    fn comparison_timeout_is_inconclusive() {
        let g = gateway(|t| if t.contains("SpecCmp") { Verdict::Timeout } else { Verdict::Verified });
        let b = score(&SourceFile::parse(CODE), GT, GT, &RewardWeights::default(), &g);
        assert_eq!(b.category, Category::Verified);
        assert_eq!(b.per_method[0].post_strengthening, CheckVerdict::Inconclusive);
    }

    #[test]
    fn missing_method_and_signature_change_fail_closed() {
        let g = gateway(|_| Verdict::Verified);
        let code = SourceFile::parse(CODE);
        let (ok, per) = subset_reward(&code, GT, "method Other() {}\n", &g);
        assert!(!ok);
        assert_eq!(per[0].unsupported_reason.as_deref(), Some("missing from candidate"));
        let renamed = GT.replace("(x: int)", "(z: int)");
        let (ok, per) = subset_reward(&code, GT, &renamed, &g);
        assert!(!ok);
        assert!(per[0].unsupported_reason.as_ref().unwrap().starts_with("signature changed"));
        assert_eq!(per[0].pre_relaxation, CheckVerdict::Unchecked);
    }

    #[test]
    fn heap_dependent_fails_closed() {
        let g = gateway(|_| Verdict::Verified);
        let gt = "method Make() returns (a: array<int>)\n  ensures fresh(a)\n{\n  a := new int[1];\n}\n";
        let code = SourceFile::parse("method Make() returns (a: array<int>)\n{\n  a := new int[1];\n}\n");
        let (ok, per) = subset_reward(&code, gt, gt, &g);
        assert!(!ok);
        assert!(per[0].unsupported_reason.as_ref().unwrap().contains("heap-dependent"));
    }

    #[test]
    fn helpers_without_specs_are_excluded() {
        let g = gateway(|_| Verdict::Verified);
        let gt = format!("{GT}\nfunction Twice(x: int): int {{ 2 * x }}\n");
        let code = SourceFile::parse(&format!("{CODE}\nfunction Twice(x: int): int {{ 2 * x }}\n"));
        let (ok, per) = subset_reward(&code, &gt, &gt, &g);
        assert!(ok);
        assert_eq!(per.len(), 1);
    }

    #[test]
    fn tool_error_is_distinguished() {
        let g = gateway(|_| Verdict::ToolError);
        assert!(syntax_reward("method M() {}", &g).is_err());
        let b = score(&SourceFile::parse(CODE), GT, GT, &RewardWeights::default(), &g);
        assert!(b.is_tool_error());
        assert!(!b.syntax_ok);
    }

    #[test]
    fn group_is_positional() {
        let g = gateway(|t| if t.contains("BROKEN") { Verdict::SyntaxError } else { Verdict::Verified });
        let cands = vec![GT.to_string(), "BROKEN".to_string(), GT.to_string()];
        let out = score_group(&SourceFile::parse(CODE), GT, &cands, &RewardWeights::default(), &g);
        let scalars: Vec<f64> = out.iter().map(|b| b.scalar).collect();
        assert_eq!(scalars, vec![3.0, 0.0, 3.0]);
    }
}
