//! Fine-tuning dataset curation: up-sample low-scoring documents, split into
//! train/val/test, and summarize the result.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::AnnotatedDocument;
use crate::prf;
use crate::schema::{Criterion, ALL_CRITERIA};

#[derive(Debug, Error)]
pub enum CurateError {
    #[error("split fractions must sum to 1, got {0}")]
    BadFractions(f64),
    #[error("fraction out of [0,1]: {0}")]
    FractionRange(f64),
    #[error("fold must be >= 1")]
    BadFold,
    #[error("low threshold must be in 2..=5, got {0}")]
    BadThreshold(u8),
}

/// How to balance low-scoring documents by replication.
///
/// "Low" means overall_score strictly below `low_threshold`. `fold` is the
/// total number of copies each low document receives; fold 1 changes nothing.
#[derive(Debug, Clone, Serialize)]
pub struct BalancePolicy {
    pub low_threshold: u8,
    pub fold: u32,
    /// Optional per-source fold overrides.
    pub grouping: BTreeMap<String, u32>,
}

impl Default for BalancePolicy {
    fn default() -> Self {
        BalancePolicy {
            low_threshold: 3,
            fold: 4,
            grouping: BTreeMap::new(),
        }
    }
}

impl BalancePolicy {
    fn validate(&self) -> Result<(), CurateError> {
        if self.fold < 1 || self.grouping.values().any(|&f| f < 1) {
            return Err(CurateError::BadFold);
        }
        if !(2..=5).contains(&self.low_threshold) {
            return Err(CurateError::BadThreshold(self.low_threshold));
        }
        Ok(())
    }

    fn fold_for(&self, source: &str) -> u32 {
        self.grouping.get(source).copied().unwrap_or(self.fold)
    }
}

/// Replica suffix separator. `strip_replica` removes it so up-sampled
/// datasets can be joined back against the original annotations.
const REPLICA_SEP: &str = "~r";

/// Original id of a possibly replicated record.
pub fn strip_replica(id: &str) -> &str {
    match id.rfind(REPLICA_SEP) {
        Some(pos) if id[pos + REPLICA_SEP.len()..].chars().all(|c| c.is_ascii_digit())
            && pos + REPLICA_SEP.len() < id.len() =>
        {
            &id[..pos]
        }
        _ => id,
    }
}

/// Replicate low-scoring records `fold` times total and shuffle by `seed`.
/// Copy k of a low record gets the id `{id}~r{k}` for k >= 1; the first copy
/// keeps the original id.
pub fn upsample_low(
    records: &[AnnotatedDocument],
    policy: &BalancePolicy,
    seed: u64,
) -> Result<Vec<AnnotatedDocument>, CurateError> {
    policy.validate()?;
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        out.push(rec.clone());
        if rec.overall_score() < policy.low_threshold {
            for k in 1..policy.fold_for(&rec.doc.source) {
                let mut copy = rec.clone();
                copy.doc.id = format!("{}{REPLICA_SEP}{k}", rec.doc.id);
                copy.annotation.doc_id = copy.doc.id.clone();
                out.push(copy);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.shuffle(&mut rng);
    Ok(out)
}

/// Which record fields define the strata for splitting.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StratifyBy {
    pub overall_score: bool,
    pub domain: bool,
    pub source: bool,
}

impl Default for StratifyBy {
    /// Overall score only, so rare low scores reach every split.
    fn default() -> Self {
        StratifyBy {
            overall_score: true,
            domain: false,
            source: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitSpec {
    /// (train, val, test), summing to 1.
    pub fractions: (f64, f64, f64),
    pub stratify_by: StratifyBy,
    pub seed: u64,
}

fn stratum_key(rec: &AnnotatedDocument, by: StratifyBy) -> String {
    let mut parts = Vec::new();
    if by.overall_score {
        parts.push(rec.overall_score().to_string());
    }
    if by.domain {
        parts.push(rec.domain().name().to_string());
    }
    if by.source {
        parts.push(rec.doc.source.clone());
    }
    parts.join("/")
}

/// Allocate `n` items to parts proportional to `fractions` by largest
/// remainder. The result sums to `n` and each part is within one of
/// `n * fraction`.
fn largest_remainder(n: usize, fractions: &[f64]) -> Vec<usize> {
    let ideal: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    // Ties broken by part index so allocation is deterministic.
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for i in 0..n - assigned {
        counts[order[i % order.len()]] += 1;
    }
    counts
}

/// Stratified deterministic partition into (train, val, test).
///
/// Within each stratum, records are ordered by a keyed hash of their id, so
/// the split is independent of input order and identical for identical
/// (records, spec).
pub fn split(
    records: &[AnnotatedDocument],
    spec: &SplitSpec,
) -> Result<(Vec<AnnotatedDocument>, Vec<AnnotatedDocument>, Vec<AnnotatedDocument>), CurateError> {
    let (a, b, c) = spec.fractions;
    for f in [a, b, c] {
        if !(0.0..=1.0).contains(&f) {
            return Err(CurateError::FractionRange(f));
        }
    }
    let sum = a + b + c;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CurateError::BadFractions(sum));
    }

    let mut strata: BTreeMap<String, Vec<&AnnotatedDocument>> = BTreeMap::new();
    for rec in records {
        strata
            .entry(stratum_key(rec, spec.stratify_by))
            .or_default()
            .push(rec);
    }

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for (key, mut group) in strata {
        group.sort_by(|x, y| {
            prf::uniform(spec.seed, &key, &x.doc.id)
                .total_cmp(&prf::uniform(spec.seed, &key, &y.doc.id))
                .then_with(|| x.doc.id.cmp(&y.doc.id))
        });
        let counts = largest_remainder(group.len(), &[a, b, c]);
        let mut it = group.into_iter();
        train.extend(it.by_ref().take(counts[0]).cloned());
        val.extend(it.by_ref().take(counts[1]).cloned());
        test.extend(it.cloned());
    }
    Ok((train, val, test))
}

/// Counts and proportions by domain, score, and source, plus per-domain mean
/// of each criterion.
#[derive(Debug, Clone, Serialize)]
pub struct CurationReport {
    pub total: usize,
    pub by_domain: BTreeMap<String, usize>,
    pub by_overall_score: BTreeMap<u8, usize>,
    pub by_source: BTreeMap<String, usize>,
    pub score_proportions: BTreeMap<u8, f64>,
    /// domain -> criterion key -> mean rating.
    pub domain_criterion_means: BTreeMap<String, BTreeMap<String, f64>>,
}

pub fn curation_report(records: &[AnnotatedDocument]) -> CurationReport {
    let mut by_domain: BTreeMap<String, usize> = BTreeMap::new();
    let mut by_overall_score: BTreeMap<u8, usize> = BTreeMap::new();
    let mut by_source: BTreeMap<String, usize> = BTreeMap::new();
    let mut sums: BTreeMap<String, BTreeMap<Criterion, (f64, usize)>> = BTreeMap::new();
    for rec in records {
        let domain = rec.domain().name().to_string();
        *by_domain.entry(domain.clone()).or_default() += 1;
        *by_overall_score.entry(rec.overall_score()).or_default() += 1;
        *by_source.entry(rec.doc.source.clone()).or_default() += 1;
        let entry = sums.entry(domain).or_default();
        for c in ALL_CRITERIA {
            if let Some(level) = rec.rating(c) {
                let cell = entry.entry(c).or_insert((0.0, 0));
                cell.0 += level as f64;
                cell.1 += 1;
            }
        }
    }
    let total = records.len();
    let score_proportions = by_overall_score
        .iter()
        .map(|(&level, &n)| (level, n as f64 / total.max(1) as f64))
        .collect();
    let domain_criterion_means = sums
        .into_iter()
        .map(|(domain, per)| {
            let means = per
                .into_iter()
                .map(|(c, (sum, n))| (c.key().to_string(), sum / n as f64))
                .collect();
            (domain, means)
        })
        .collect();
    CurationReport {
        total,
        by_domain,
        by_overall_score,
        by_source,
        score_proportions,
        domain_criterion_means,
    }
}
