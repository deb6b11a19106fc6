//! Batch evaluation: score rollouts for each dataset record and aggregate.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use specgate::grpo;
use specgate::metrics::{aggregate, embed_postconditions, novel_spec_check, EmbeddingProvider, EvalRecord, MetricsError, MetricsReport};
use specgate::reward::{score_group, RewardWeights};
use specgate::source::{extract_clause_sets, SourceFile};
use specgate::verifier::Gateway;

/// One input with its rollouts, in rollout-index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub input_id: String,
    pub code: String,
    pub ground_truth: String,
    pub rollouts: Vec<String>,
}

#[derive(Default)]
pub struct EvalOptions<'a> {
    pub k_values: Vec<usize>,
    /// Reference rollouts by input id; postconditions found there are not novel.
    pub novelty_pool: Option<&'a BTreeMap<String, Vec<String>>>,
    pub embedder: Option<&'a dyn EmbeddingProvider>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalOutput {
    pub report: MetricsReport,
    pub records: Vec<EvalRecord>,
}

/// Reads `<dir>/<input_id>/<index>.dfy` in numeric index order. Files whose
/// stem is not an integer are ignored.
pub fn load_rollouts(dir: &Path, input_id: &str) -> io::Result<Vec<String>> {
    let mut indexed = Vec::new();
    for entry in fs::read_dir(dir.join(input_id))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("dfy") {
            continue;
        }
        if let Some(idx) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<usize>().ok()) {
            indexed.push((idx, fs::read_to_string(&path)?));
        }
    }
    indexed.sort_by_key(|(i, _)| *i);
    Ok(indexed.into_iter().map(|(_, t)| t).collect())
}

/// Postconditions of `unit_name` across `programs`.
fn pool_posts(programs: &[String], unit_name: &str) -> Vec<String> {
    let mut out = Vec::new();
    for p in programs {
        if let Some(u) = SourceFile::parse(p).unit(unit_name) {
            for c in extract_clause_sets(u).post {
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
    }
    out
}

/// A verified rollout is novel when any of its methods carries a
/// postcondition set the reference pool does not entail.
fn rollout_is_novel(code: &SourceFile, candidate: &str, reference: &[String], gateway: &Gateway) -> bool {
    let cand = SourceFile::parse(candidate);
    code.units.iter().any(|unit| {
        let Some(gen_unit) = cand.unit(&unit.qualified_name) else {
            return false;
        };
        let gen = extract_clause_sets(gen_unit);
        if gen.post.is_empty() {
            return false;
        }
        let pool = pool_posts(reference, &unit.qualified_name);
        match novel_spec_check(code, unit, &pool, &gen, gateway) {
            Ok(n) => n.novel,
            Err(e) => {
                tracing::warn!(unit = %unit.qualified_name, error = %e, "novelty check skipped");
                false
            }
        }
    })
}

pub fn evaluate(
    items: &[EvalItem],
    weights: &RewardWeights,
    gateway: &Gateway,
    opts: &EvalOptions,
) -> Result<EvalOutput, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut records = Vec::with_capacity(items.len());
    let mut warnings = Vec::new();
    for item in items {
        let code = SourceFile::parse_with_id(&item.input_id, &item.code);
        if item.rollouts.is_empty() {
            warnings.push(format!("record {}: no rollouts found", item.input_id));
        }
        let rollouts = score_group(&code, &item.ground_truth, &item.rollouts, weights, gateway);
        let mut record = EvalRecord::new(&item.input_id, rollouts);
        if let Some(pool) = opts.novelty_pool {
            let reference = pool.get(&item.input_id).map(Vec::as_slice).unwrap_or_default();
            let flags = record
                .rollouts
                .iter()
                .zip(&item.rollouts)
                .map(|(b, text)| b.verified_ok && rollout_is_novel(&code, text, reference, gateway))
                .collect();
            record.novel_flags = Some(flags);
        }
        if let Some(embedder) = opts.embedder {
            let posts: Vec<String> = item
                .rollouts
                .iter()
                .flat_map(|r| {
                    SourceFile::parse(r)
                        .units
                        .iter()
                        .flat_map(|u| extract_clause_sets(u).post)
                        .collect::<Vec<_>>()
                })
                .collect();
            match embed_postconditions(&posts, embedder) {
                Ok(v) => record.embeddings = Some(v),
                Err(e) => warnings.push(format!("record {}: embeddings unavailable: {e}", item.input_id)),
            }
        }
        records.push(record);
    }
    let mut report = aggregate(&records, &opts.k_values)?;
    report.warnings.splice(0..0, warnings);
    Ok(EvalOutput { report, records })
}

pub fn write_outputs(out: &Path, output: &EvalOutput) -> io::Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&output.report)? + "\n")?;

    let r = &output.report;
    let mut w = csv::Writer::from_path(out.join("metrics.csv"))?;
    w.write_record(["metric", "k", "value"])?;
    let mut row = |metric: &str, k: &str, value: String| w.write_record([metric, k, &value]);
    row("records", "", r.records.to_string())?;
    row("rollouts", "", r.rollouts.to_string())?;
    row("validation_rate", "1", r.validation_rate.to_string())?;
    row("verification_rate", "1", r.verification_rate.to_string())?;
    row("ssr", "1", r.ssr.to_string())?;
    for (k, rates) in &r.pass_at_k {
        let k = k.to_string();
        row("pass_validation", &k, rates.validation.to_string())?;
        row("pass_verification", &k, rates.verification.to_string())?;
        row("pass_ssr", &k, rates.ssr.to_string())?;
    }
    let h = &r.category_histogram;
    row("category_syntax_error", "", h.syntax_error.to_string())?;
    row("category_syntax_correct", "", h.syntax_correct.to_string())?;
    row("category_verified", "", h.verified.to_string())?;
    row("category_verified_superior", "", h.verified_superior.to_string())?;
    row("timeouts", "", r.timeouts.to_string())?;
    row("tool_errors", "", r.tool_errors.to_string())?;
    if let Some(v) = r.novel_spec_rate {
        row("novel_spec_rate", "", v.to_string())?;
    }
    if let Some(v) = r.diversity {
        row("diversity", "", v.to_string())?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("records.csv"))?;
    w.write_record([
        "input_id", "rollout", "syntax_ok", "verified_ok", "subset_ok", "scalar", "advantage", "category", "timed_out", "novel", "error",
    ])?;
    for rec in &output.records {
        let scalars: Vec<f64> = rec.rollouts.iter().map(|b| b.scalar).collect();
        let adv = grpo::advantages(&scalars);
        for (i, b) in rec.rollouts.iter().enumerate() {
            let novel = rec.novel_flags.as_ref().map_or(String::new(), |f| f[i].to_string());
            let category = serde_json::to_value(b.category)?.as_str().unwrap_or_default().to_string();
            w.write_record([
                rec.input_id.clone(),
                i.to_string(),
                b.syntax_ok.to_string(),
                b.verified_ok.to_string(),
                b.subset_ok.to_string(),
                b.scalar.to_string(),
                adv[i].to_string(),
                category,
                b.timed_out.to_string(),
                novel,
                b.error.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush()
}
