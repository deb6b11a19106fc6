//! Novel-postcondition check against a reference pool.
//!
//! A generated postcondition set is novel when the pool of reference
//! postconditions together with the generated precondition does not entail
//! it. Adding a conjunct can only strengthen, so `pool ∧ pre ∧ post` always
//! implies `pool ∧ pre`; equivalence of the two therefore reduces to the
//! single entailment `pool ∧ pre ⇒ post`, which one lemma checks.

use serde::{Deserialize, Serialize};

use crate::reward::{bindable_names, check_bound, check_verdict, emit_lemmas, CheckVerdict, CompareError, LemmaSpec};
use crate::source::{conjoin, mentions_heap, normalize_ws, ClauseSet, MethodUnit, SourceFile};
use crate::verifier::{Gateway, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Novelty {
    pub novel: bool,
    /// Entailment lemma verdict; `Unchecked` when decided without the verifier.
    pub verdict: CheckVerdict,
    /// Pool clauses dropped because they do not bind, mention heap state, or
    /// fail to parse and resolve in the method's context.
    pub pool_filtered: usize,
}

fn is_trivially_true(clause: &str) -> bool {
    matches!(normalize_ws(clause).trim_matches(|c| c == '(' || c == ')' || c == ' '), "true")
}

/// Keeps pool clauses that bind in the method's context and survive a
/// parse/resolve probe. Returns the kept clauses.
fn filter_pool(code: &SourceFile, unit: &MethodUnit, pool: &[String], gateway: &Gateway) -> Vec<String> {
    let known = bindable_names(code, unit, true);
    let lexical: Vec<&String> = pool
        .iter()
        .filter(|c| !mentions_heap(c) && check_bound(std::slice::from_ref(*c), &known).is_ok())
        .collect();
    let probes: Vec<String> = lexical
        .iter()
        .map(|c| {
            let spec = LemmaSpec {
                base_name: format!("PoolProbe_{}", unit.name),
                bind_results: true,
                requires: vec![format!("({})", c.trim())],
                ensures: "true".into(),
            };
            emit_lemmas(code, unit, &[spec]).0
        })
        .collect();
    lexical
        .into_iter()
        .zip(gateway.verify_batch(&probes))
        .filter(|(_, o)| !matches!(o.verdict, Verdict::SyntaxError | Verdict::TypeError | Verdict::ToolError))
        .map(|(c, _)| c.clone())
        .collect()
}

pub fn novel_spec_check(
    code: &SourceFile,
    method: &MethodUnit,
    pool_posts: &[String],
    gen: &ClauseSet,
    gateway: &Gateway,
) -> Result<Novelty, CompareError> {
    if gen.heap_dependent {
        return Err(CompareError::UnsupportedSpec(format!(
            "generated specification of `{}` is heap-dependent",
            method.qualified_name
        )));
    }
    let unit = code
        .unit(&method.qualified_name)
        .ok_or_else(|| CompareError::UnknownUnit(method.qualified_name.clone()))?;

    // A postcondition already in the pool, or `true`, is entailed outright.
    let in_pool = |c: &String| pool_posts.iter().any(|p| normalize_ws(p) == normalize_ws(c));
    let residual: Vec<String> = gen
        .post
        .iter()
        .filter(|c| !is_trivially_true(c) && !in_pool(c))
        .cloned()
        .collect();
    if residual.is_empty() {
        return Ok(Novelty {
            novel: false,
            verdict: CheckVerdict::Unchecked,
            pool_filtered: 0,
        });
    }
    check_bound(&gen.pre, &bindable_names(code, unit, false))?;
    check_bound(&gen.post, &bindable_names(code, unit, true))?;

    let kept = filter_pool(code, unit, pool_posts, gateway);
    let pool_filtered = pool_posts.len() - kept.len();
    let spec = LemmaSpec {
        base_name: format!("NoveltyCheck_{}", unit.name),
        bind_results: true,
        requires: vec![conjoin(&kept), conjoin(&gen.pre)],
        ensures: conjoin(&gen.post),
    };
    let (text, sites) = emit_lemmas(code, unit, &[spec]);
    let outcome = gateway.verify(&text);
    let verdict = check_verdict(&outcome, &sites[0]);
    Ok(Novelty {
        // Only a failed proof counts; solver give-ups are not evidence.
        novel: verdict == CheckVerdict::Refuted,
        verdict,
        pool_filtered,
    })
}
