//! Extreme-perplexity tail mining: per source (or globally), select the
//! documents with the highest and lowest mean negative log-likelihood.
//!
//! Ranking uses nll directly; perplexity is exp(nll), strictly monotone in
//! nll, so the tails are identical and overflow is avoided.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::Document;

#[derive(Debug, Error)]
pub enum AnomalyError {
    #[error("fraction must be in (0, 0.5], got {0}")]
    BadFraction(f64),
    #[error("documents missing nll: {0:?}")]
    MissingNll(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Source,
    Global,
}

/// The extreme-perplexity tails of one group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnomalySet {
    pub source: String,
    pub fraction: f64,
    /// Highest-nll doc ids, worst first.
    pub high: Vec<String>,
    /// Lowest-nll doc ids, lowest first.
    pub low: Vec<String>,
    /// True when the group is so small that the two tails overlap.
    pub overlapping: bool,
}

/// Select per-group nll tails of size `ceil(fraction * n)`. Ties are broken
/// by ascending doc id, so output is independent of input order.
pub fn extract_anomalies(
    docs: &[Document],
    fraction: f64,
    group_by: GroupBy,
) -> Result<Vec<AnomalySet>, AnomalyError> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(AnomalyError::BadFraction(fraction));
    }
    let missing: Vec<String> = docs
        .iter()
        .filter(|d| d.nll.is_none())
        .map(|d| d.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(AnomalyError::MissingNll(missing));
    }

    let mut groups: BTreeMap<String, Vec<&Document>> = BTreeMap::new();
    for doc in docs {
        let key = match group_by {
            GroupBy::Source => doc.source.clone(),
            GroupBy::Global => "all".to_string(),
        };
        groups.entry(key).or_default().push(doc);
    }

    let mut sets = Vec::new();
    for (source, mut group) in groups {
        group.sort_by(|a, b| {
            a.nll
                .unwrap()
                .total_cmp(&b.nll.unwrap())
                .then_with(|| a.id.cmp(&b.id))
        });
        let n = group.len();
        let t = (fraction * n as f64).ceil() as usize;
        let low: Vec<String> = group[..t].iter().map(|d| d.id.clone()).collect();
        let mut high: Vec<String> = group[n - t..].iter().map(|d| d.id.clone()).collect();
        high.reverse();
        sets.push(AnomalySet {
            source,
            fraction,
            overlapping: 2 * t > n,
            high,
            low,
        });
    }
    Ok(sets)
}

/// The analytical prompt rendered for each tail document, for manual or LLM
/// study of why the perplexity is anomalous.
pub fn analysis_prompt(doc: &Document, high_tail: bool) -> String {
    let ppl = doc.nll.map(f64::exp).unwrap_or(f64::NAN);
    format!(
        "Read the following document, which has a {} perplexity of {ppl:.2} for LLM inference. \
         Please analyze the reasons for the PPL anomaly.\n\n{}",
        if high_tail { "high" } else { "low" },
        doc.text
    )
}
