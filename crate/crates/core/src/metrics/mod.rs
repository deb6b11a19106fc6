//! Evaluation metrics over scored rollouts: validation, verification and
//! superiority rates, pass@k, the category histogram, novelty and diversity.

mod embed;
mod novelty;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{embed_postconditions, CachedEmbedder, EmbedError, EmbeddingProvider, HttpEmbedder};
pub use novelty::{novel_spec_check, Novelty};

use crate::reward::{Category, RewardBreakdown};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no records to aggregate")]
    EmptyInput,
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub input_id: String,
    pub rollouts: Vec<RewardBreakdown>,
    /// Per-rollout novelty flags.
    pub novel_flags: Option<Vec<bool>>,
    /// Embeddings of the postconditions of all rollouts.
    pub embeddings: Option<Vec<Vec<f64>>>,
}

impl EvalRecord {
    pub fn new(input_id: impl Into<String>, rollouts: Vec<RewardBreakdown>) -> Self {
        EvalRecord {
            input_id: input_id.into(),
            rollouts,
            novel_flags: None,
            embeddings: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub validation: f64,
    pub verification: f64,
    pub ssr: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryHistogram {
    pub syntax_error: f64,
    pub syntax_correct: f64,
    pub verified: f64,
    pub verified_superior: f64,
}

impl CategoryHistogram {
    pub fn total(&self) -> f64 {
        self.syntax_error + self.syntax_correct + self.verified + self.verified_superior
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub records: usize,
    pub rollouts: usize,
    pub validation_rate: f64,
    pub verification_rate: f64,
    pub ssr: f64,
    pub pass_at_k: BTreeMap<usize, Rates>,
    /// Over all rollouts, not just the first.
    pub category_histogram: CategoryHistogram,
    /// Rollouts whose verification timed out; they count as not verified.
    pub timeouts: usize,
    pub tool_errors: usize,
    /// Fraction of records with at least one novel rollout.
    pub novel_spec_rate: Option<f64>,
    /// Mean per-record diversity score.
    pub diversity: Option<f64>,
    pub warnings: Vec<String>,
}

fn frac(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64
    }
}

fn pass_at(records: &[EvalRecord], k: usize) -> Rates {
    let hit = |pred: fn(&RewardBreakdown) -> bool| {
        records
            .iter()
            .filter(|r| r.rollouts.iter().take(k).any(pred))
            .count()
    };
    Rates {
        validation: frac(hit(|b| b.syntax_ok), records.len()),
        verification: frac(hit(|b| b.verified_ok), records.len()),
        ssr: frac(hit(|b| b.subset_ok), records.len()),
    }
}

/// Top-level rates use rollout 0 only (pass@1). A `k` beyond a record's
/// rollout count is truncated to what is available, with a warning.
pub fn aggregate(records: &[EvalRecord], k_values: &[usize]) -> Result<MetricsReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut warnings = Vec::new();
    let fewest = records.iter().map(|r| r.rollouts.len()).min().unwrap_or(0);
    let mut pass_at_k = BTreeMap::new();
    for &k in k_values {
        if k == 0 {
            warnings.push("k = 0 ignored".to_string());
            continue;
        }
        if k > fewest {
            let msg = format!("k = {k} exceeds the smallest rollout count ({fewest}); using available rollouts");
            tracing::warn!("{msg}");
            warnings.push(msg);
        }
        pass_at_k.insert(k, pass_at(records, k));
    }
    let first = pass_at(records, 1);

    let all: Vec<&RewardBreakdown> = records.iter().flat_map(|r| r.rollouts.iter()).collect();
    let count = |c: Category| frac(all.iter().filter(|b| b.category == c).count(), all.len());
    let category_histogram = CategoryHistogram {
        syntax_error: count(Category::SyntaxError),
        syntax_correct: count(Category::SyntaxCorrect),
        verified: count(Category::Verified),
        verified_superior: count(Category::VerifiedSuperior),
    };

    let flagged: Vec<&Vec<bool>> = records.iter().filter_map(|r| r.novel_flags.as_ref()).collect();
    let novel_spec_rate = (!flagged.is_empty())
        .then(|| frac(flagged.iter().filter(|f| f.iter().any(|&x| x)).count(), flagged.len()));

    let mut scores = Vec::new();
    for r in records {
        if let Some(e) = r.embeddings.as_ref().filter(|e| !e.is_empty()) {
            scores.push(diversity_score(e)?);
        }
    }
    let diversity = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);

    Ok(MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        records: records.len(),
        rollouts: all.len(),
        validation_rate: first.validation,
        verification_rate: first.verification,
        ssr: first.ssr,
        pass_at_k,
        category_histogram,
        timeouts: all.iter().filter(|b| b.timed_out).count(),
        tool_errors: all.iter().filter(|b| b.is_tool_error()).count(),
        novel_spec_rate,
        diversity,
        warnings,
    })
}

/// Mean squared distance of the vectors to their centroid.
pub fn diversity_score(embeddings: &[Vec<f64>]) -> Result<f64, MetricsError> {
    let Some(first) = embeddings.first() else {
        return Err(MetricsError::EmptyInput);
    };
    let dim = first.len();
    if let Some(v) = embeddings.iter().find(|v| v.len() != dim) {
        return Err(MetricsError::DimensionMismatch(dim, v.len()));
    }
    let n = embeddings.len() as f64;
    let mut mu = vec![0.0; dim];
    for v in embeddings {
        for (m, x) in mu.iter_mut().zip(v) {
            *m += x / n;
        }
    }
    Ok(embeddings
        .iter()
        .map(|v| v.iter().zip(&mu).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
        .sum::<f64>()
        / n)
}
