//! Token-budgeted subset selection from an annotated corpus.
//!
//! All randomized strategies derive per-document keys from a keyed PRF, so a
//! run is a pure function of (corpus, spec, seed): order-independent,
//! reproducible at any parallelism, and summarized by a manifest digest.
//!
//! Weighted selection uses exponentiated-uniform keys u^(1/w): taking
//! documents in descending key order reproduces sequential weighted draws
//! without replacement, which is what the small-corpus oracle enumerates.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::AnnotatedDocument;
use crate::prf;
use crate::schema::{Criterion, DomainType};

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("no candidate documents for strategy")]
    EmptyCandidates,
    #[error("documents missing nll: {0} of {1}")]
    MissingNll(usize, usize),
    #[error("document {doc_id} missing rating for {criterion}")]
    MissingRating { doc_id: String, criterion: Criterion },
    #[error("stratum {stratum} cannot fill its budget of {budget} tokens (has {available})")]
    Shortfall {
        stratum: String,
        budget: u64,
        available: u64,
    },
    #[error("corpus has {available} candidate tokens, budget is {budget}")]
    BudgetExceedsCorpus { budget: u64, available: u64 },
    #[error("oracle supports at most {max} documents, got {got}")]
    OracleTooLarge { max: usize, got: usize },
    #[error("oracle does not support this strategy")]
    OracleUnsupported,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("manifest missing header line")]
    MissingHeader,
}

/// Token-mass distribution over (source, domain) strata.
#[derive(Debug, Clone, Serialize)]
pub struct JointDistribution {
    pub total_tokens: u64,
    /// (source, domain name) -> token mass.
    pub joint: BTreeMap<(String, String), u64>,
}

impl JointDistribution {
    pub fn probability(&self, source: &str, domain: &str) -> f64 {
        let mass = self
            .joint
            .get(&(source.to_string(), domain.to_string()))
            .copied()
            .unwrap_or(0);
        mass as f64 / self.total_tokens as f64
    }

    pub fn source_probability(&self, source: &str) -> f64 {
        let mass: u64 = self
            .joint
            .iter()
            .filter(|((s, _), _)| s == source)
            .map(|(_, &m)| m)
            .sum();
        mass as f64 / self.total_tokens as f64
    }

    /// Stratum probabilities under the chosen stratification, aggregated
    /// from the joint.
    fn stratum_probs(&self, stratify: Stratify) -> BTreeMap<String, f64> {
        let mut probs: BTreeMap<String, f64> = BTreeMap::new();
        for ((source, domain), &mass) in &self.joint {
            let key = stratum_of(source, domain, stratify);
            *probs.entry(key).or_default() += mass as f64 / self.total_tokens as f64;
        }
        probs
    }
}

/// Token-mass joint distribution of the corpus: P(s,q) = stratum tokens /
/// total tokens.
pub fn estimate_joint(corpus: &[AnnotatedDocument]) -> Result<JointDistribution, SampleError> {
    if corpus.is_empty() {
        return Err(SampleError::EmptyCorpus);
    }
    let mut joint: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut total = 0u64;
    for doc in corpus {
        *joint
            .entry((doc.doc.source.clone(), doc.domain().name().to_string()))
            .or_default() += doc.doc.token_count;
        total += doc.doc.token_count;
    }
    Ok(JointDistribution {
        total_tokens: total,
        joint,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Weighted sampling without replacement, weight = the document's level
    /// on one criterion.
    CriterionWeighted { criterion: Criterion },
    /// Uniform sampling among documents at exactly one overall-score level,
    /// stratified by source only.
    FixedLevel { level: u8 },
    /// Perturbed standardized scores: key = z/tau + Gumbel noise. tau = 0 is
    /// deterministic top selection by z.
    Temperature { criterion: Criterion, tau: f64 },
    Uniform,
    /// Deterministic take of lowest or highest nll.
    Perplexity { highest: bool },
    /// Uniform among documents in the given domains with overall_score at
    /// least min_level.
    DomainFilter {
        domains: BTreeSet<DomainType>,
        min_level: u8,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratify {
    SourceAndDomain,
    SourceOnly,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shortfall {
    Error,
    Redistribute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub strategy: Strategy,
    pub token_budget: u64,
    pub seed: u64,
    pub stratify: Stratify,
    pub shortfall: Shortfall,
    /// Alternative weighted-selection reading: restrict each stratum to the
    /// minimal highest-weight prefix covering its budget before sampling.
    /// Off by default.
    #[serde(default)]
    pub restrict_to_top_rated: bool,
}

impl SampleSpec {
    pub fn new(strategy: Strategy, token_budget: u64, seed: u64) -> SampleSpec {
        SampleSpec {
            strategy,
            token_budget,
            seed,
            stratify: Stratify::SourceAndDomain,
            shortfall: Shortfall::Redistribute,
            restrict_to_top_rated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub doc_id: String,
    pub source: String,
    pub domain: String,
    pub overall_score: u8,
    pub token_count: u64,
    pub weight: f64,
    pub key: f64,
}

/// Reproducible record of one sampling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetManifest {
    pub spec: SampleSpec,
    pub seed: u64,
    pub prf: String,
    pub total_tokens: u64,
    pub digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parents: Vec<String>,
    pub rows: Vec<ManifestRow>,
}

fn stratum_of(source: &str, domain: &str, stratify: Stratify) -> String {
    match stratify {
        Stratify::SourceAndDomain => format!("{source}/{domain}"),
        Stratify::SourceOnly => source.to_string(),
        Stratify::None => String::new(),
    }
}

/// Largest-remainder allocation of an integer token budget across strata.
/// Probabilities need not sum to 1; they are renormalized first.
fn allocate_budget(budget: u64, probs: &BTreeMap<String, f64>) -> BTreeMap<String, u64> {
    let total_p: f64 = probs.values().sum();
    if total_p <= 0.0 {
        return probs.keys().map(|k| (k.clone(), 0)).collect();
    }
    let ideal: Vec<(&String, f64)> = probs
        .iter()
        .map(|(k, p)| (k, budget as f64 * p / total_p))
        .collect();
    let mut out: BTreeMap<String, u64> = ideal
        .iter()
        .map(|(k, x)| ((*k).clone(), x.floor() as u64))
        .collect();
    let assigned: u64 = out.values().sum();
    let mut order: Vec<usize> = (0..ideal.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a].1 - ideal[a].1.floor();
        let rb = ideal[b].1 - ideal[b].1.floor();
        rb.total_cmp(&ra).then(ideal[a].0.cmp(ideal[b].0))
    });
    let mut remainder = budget - assigned;
    let mut i = 0;
    while remainder > 0 {
        // One token per stratum per pass, largest remainders first.
        *out.get_mut(ideal[order[i % order.len()]].0).unwrap() += 1;
        remainder -= 1;
        i += 1;
    }
    out
}

/// One candidate inside a stratum, with its selection weight (for weighted
/// strategies) and its deterministic ordering key.
#[derive(Debug, Clone)]
struct Candidate {
    doc_id: String,
    source: String,
    domain: String,
    overall_score: u8,
    token_count: u64,
    weight: f64,
    key: f64,
}

/// Ordering rule for taking candidates: key descending, ties by doc_id
/// ascending.
fn take_order(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    b.key.total_cmp(&a.key).then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Population z-scores of one criterion over the candidates. Degenerate
/// variance yields None (caller falls back to uniform keys).
fn standardize(levels: &[f64]) -> Option<Vec<f64>> {
    let n = levels.len() as f64;
    let mean = levels.iter().sum::<f64>() / n;
    let var = levels.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return None;
    }
    let sd = var.sqrt();
    Some(levels.iter().map(|l| (l - mean) / sd).collect())
}

fn rating_or_err(doc: &AnnotatedDocument, criterion: Criterion) -> Result<u8, SampleError> {
    doc.rating(criterion).ok_or_else(|| SampleError::MissingRating {
        doc_id: doc.doc.id.clone(),
        criterion,
    })
}

/// Build per-stratum candidate lists with weights and keys resolved.
fn build_candidates(
    corpus: &[AnnotatedDocument],
    spec: &SampleSpec,
    stratify: Stratify,
) -> Result<BTreeMap<String, Vec<Candidate>>, SampleError> {
    let mut kept: Vec<(&AnnotatedDocument, f64)> = Vec::new();
    match &spec.strategy {
        Strategy::CriterionWeighted { criterion } => {
            for doc in corpus {
                kept.push((doc, rating_or_err(doc, *criterion)? as f64));
            }
        }
        Strategy::FixedLevel { level } => {
            for doc in corpus {
                if doc.overall_score() == *level {
                    kept.push((doc, 1.0));
                }
            }
        }
        Strategy::Temperature { criterion, .. } => {
            for doc in corpus {
                kept.push((doc, rating_or_err(doc, *criterion)? as f64));
            }
        }
        Strategy::Uniform => kept.extend(corpus.iter().map(|d| (d, 1.0))),
        Strategy::Perplexity { .. } => {
            let missing = corpus.iter().filter(|d| d.doc.nll.is_none()).count();
            if missing > 0 {
                return Err(SampleError::MissingNll(missing, corpus.len()));
            }
            kept.extend(corpus.iter().map(|d| (d, 1.0)));
        }
        Strategy::DomainFilter { domains, min_level } => {
            for doc in corpus {
                if domains.contains(&doc.domain()) && doc.overall_score() >= *min_level {
                    kept.push((doc, 1.0));
                }
            }
        }
    }
    if kept.is_empty() {
        return Err(SampleError::EmptyCandidates);
    }

    // Temperature scores standardize over the whole candidate set, not per
    // stratum.
    let zscores: Option<Vec<f64>> = match &spec.strategy {
        Strategy::Temperature { .. } => {
            let levels: Vec<f64> = kept.iter().map(|(_, w)| *w).collect();
            let z = standardize(&levels);
            if z.is_none() {
                log::warn!("temperature sampling: constant ratings, falling back to uniform keys");
            }
            z
        }
        _ => None,
    };

    let mut strata: BTreeMap<String, Vec<Candidate>> = BTreeMap::new();
    for (i, (doc, weight)) in kept.iter().enumerate() {
        let stratum = stratum_of(&doc.doc.source, doc.domain().name(), stratify);
        let id = &doc.doc.id;
        let (weight, key) = match &spec.strategy {
            Strategy::CriterionWeighted { .. } => {
                (*weight, prf::weighted_key(spec.seed, &stratum, id, *weight))
            }
            Strategy::FixedLevel { .. } | Strategy::Uniform | Strategy::DomainFilter { .. } => {
                (1.0, prf::uniform(spec.seed, &stratum, id))
            }
            Strategy::Temperature { tau, .. } => match (&zscores, *tau) {
                (None, _) => (1.0, prf::uniform(spec.seed, &stratum, id)),
                (Some(z), t) if t == 0.0 => (z[i], z[i]),
                (Some(z), t) => (z[i], z[i] / t + prf::gumbel(spec.seed, &stratum, id)),
            },
            Strategy::Perplexity { highest } => {
                let nll = doc.doc.nll.unwrap();
                let key = if *highest { nll } else { -nll };
                (1.0, key)
            }
        };
        strata.entry(stratum).or_default().push(Candidate {
            doc_id: doc.doc.id.clone(),
            source: doc.doc.source.clone(),
            domain: doc.domain().name().to_string(),
            overall_score: doc.overall_score(),
            token_count: doc.doc.token_count,
            weight,
            key,
        });
    }
    Ok(strata)
}

/// Resolve per-stratum token budgets, applying the shortfall rule against
/// the candidate token masses. Returns (stratum -> budget).
fn resolve_budgets(
    budget: u64,
    probs: &BTreeMap<String, f64>,
    available: &BTreeMap<String, u64>,
    shortfall: Shortfall,
) -> Result<BTreeMap<String, u64>, SampleError> {
    // Strata with a probability but no candidates participate with zero
    // availability so their share is redistributed (or errors).
    let mut budgets = allocate_budget(budget, probs);
    loop {
        let mut deficit = 0u64;
        let mut open: BTreeMap<String, f64> = BTreeMap::new();
        for (stratum, b) in &budgets {
            let have = available.get(stratum).copied().unwrap_or(0);
            if have < *b {
                if shortfall == Shortfall::Error {
                    return Err(SampleError::Shortfall {
                        stratum: stratum.clone(),
                        budget: *b,
                        available: have,
                    });
                }
                deficit += *b - have;
            } else if have > *b {
                // Room to absorb redistribution, weighted by original share.
                open.insert(stratum.clone(), probs[stratum].max(f64::MIN_POSITIVE));
            }
        }
        if deficit == 0 {
            return Ok(budgets);
        }
        // Cap exhausted strata at their availability.
        for (stratum, b) in budgets.iter_mut() {
            let have = available.get(stratum).copied().unwrap_or(0);
            if have < *b {
                *b = have;
            }
        }
        if open.is_empty() {
            // Nothing left to absorb the deficit: the corpus cannot meet the
            // budget; take everything available.
            return Ok(budgets);
        }
        let extra = allocate_budget(deficit, &open);
        for (stratum, e) in extra {
            *budgets.get_mut(&stratum).unwrap() += e;
        }
    }
}

/// Take candidates in key order until the token budget is reached; the
/// crossing document is included. A zero budget takes nothing.
fn take_until(mut candidates: Vec<Candidate>, budget: u64) -> Vec<Candidate> {
    candidates.sort_by(take_order);
    let mut taken = Vec::new();
    let mut tokens = 0u64;
    for c in candidates {
        if tokens >= budget {
            break;
        }
        tokens += c.token_count;
        taken.push(c);
    }
    taken
}

fn manifest_digest(spec: &SampleSpec, seed: u64, rows: &[ManifestRow]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(spec).expect("spec serializes"));
    hasher.update(seed.to_le_bytes());
    hasher.update(prf::PRF_ID.as_bytes());
    let mut sorted: Vec<&ManifestRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    for row in sorted {
        hasher.update(serde_json::to_vec(row).expect("row serializes"));
        hasher.update([b'\n']);
    }
    format!("{:x}", hasher.finalize())
}

fn finish_manifest(spec: &SampleSpec, rows: Vec<ManifestRow>, parents: Vec<String>) -> SubsetManifest {
    let total_tokens = rows.iter().map(|r| r.token_count).sum();
    let digest = manifest_digest(spec, spec.seed, &rows);
    SubsetManifest {
        spec: spec.clone(),
        seed: spec.seed,
        prf: prf::PRF_ID.to_string(),
        total_tokens,
        digest,
        parents,
        rows,
    }
}

/// Select a token-budgeted subset under `spec`. Stratum budgets follow the
/// joint distribution of the full corpus, so filtered strategies retain the
/// original source proportions.
pub fn sample(
    corpus: &[AnnotatedDocument],
    spec: &SampleSpec,
    joint: &JointDistribution,
) -> Result<SubsetManifest, SampleError> {
    // Fixed-level sampling keeps the source mix only; its candidate set has
    // a skewed domain profile by construction.
    let stratify = match spec.strategy {
        Strategy::FixedLevel { .. } => Stratify::SourceOnly,
        _ => spec.stratify,
    };
    let mut strata = build_candidates(corpus, spec, stratify)?;

    if spec.restrict_to_top_rated {
        for candidates in strata.values_mut() {
            restrict_top_prefix(candidates, spec.token_budget);
        }
    }

    let probs = joint.stratum_probs(stratify);
    let available: BTreeMap<String, u64> = probs
        .keys()
        .map(|k| {
            let have = strata
                .get(k)
                .map(|cs| cs.iter().map(|c| c.token_count).sum())
                .unwrap_or(0);
            (k.clone(), have)
        })
        .collect();
    let total_available: u64 = available.values().sum();
    if spec.shortfall == Shortfall::Error && total_available < spec.token_budget {
        return Err(SampleError::BudgetExceedsCorpus {
            budget: spec.token_budget,
            available: total_available,
        });
    }
    let budgets = resolve_budgets(spec.token_budget, &probs, &available, spec.shortfall)?;

    let mut per_stratum: Vec<(String, Vec<Candidate>)> = strata
        .into_par_iter()
        .map(|(stratum, candidates)| {
            let budget = budgets.get(&stratum).copied().unwrap_or(0);
            let taken = take_until(candidates, budget);
            (stratum, taken)
        })
        .collect();
    per_stratum.sort_by(|a, b| a.0.cmp(&b.0));

    let rows: Vec<ManifestRow> = per_stratum
        .into_iter()
        .flat_map(|(_, taken)| taken)
        .map(|c| ManifestRow {
            doc_id: c.doc_id,
            source: c.source,
            domain: c.domain,
            overall_score: c.overall_score,
            token_count: c.token_count,
            weight: c.weight,
            key: c.key,
        })
        .collect();
    Ok(finish_manifest(spec, rows, Vec::new()))
}

/// Keep only the minimal highest-weight prefix whose token mass covers
/// `budget` (ties by doc_id). Used by the non-default top-restricted
/// weighted reading.
fn restrict_top_prefix(candidates: &mut Vec<Candidate>, budget: u64) {
    candidates.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    let mut tokens = 0u64;
    let mut keep = 0usize;
    for c in candidates.iter() {
        if tokens >= budget {
            break;
        }
        tokens += c.token_count;
        keep += 1;
    }
    candidates.truncate(keep);
}

const ORACLE_MAX_DOCS: usize = 10;

/// Exact per-document inclusion probabilities by enumerating every
/// without-replacement draw sequence, for corpora of at most 10 documents.
///
/// Supports the strategies whose selection law is sequential weighted draws
/// without replacement with the budget stopping rule: criterion_weighted,
/// fixed_level, temperature, and uniform.
pub fn inclusion_oracle(
    corpus: &[AnnotatedDocument],
    spec: &SampleSpec,
) -> Result<BTreeMap<String, f64>, SampleError> {
    if corpus.len() > ORACLE_MAX_DOCS {
        return Err(SampleError::OracleTooLarge {
            max: ORACLE_MAX_DOCS,
            got: corpus.len(),
        });
    }
    let stratify = match spec.strategy {
        Strategy::FixedLevel { .. } => Stratify::SourceOnly,
        _ => spec.stratify,
    };

    // Resolve each candidate's draw weight under the strategy.
    let mut weights: BTreeMap<String, Vec<(String, u64, f64)>> = BTreeMap::new();
    let mut z_for: Vec<(String, String, u64, f64)> = Vec::new();
    match &spec.strategy {
        Strategy::CriterionWeighted { criterion } => {
            for doc in corpus {
                let w = rating_or_err(doc, *criterion)? as f64;
                let s = stratum_of(&doc.doc.source, doc.domain().name(), stratify);
                weights
                    .entry(s)
                    .or_default()
                    .push((doc.doc.id.clone(), doc.doc.token_count, w));
            }
        }
        Strategy::FixedLevel { level } => {
            for doc in corpus {
                if doc.overall_score() == *level {
                    let s = stratum_of(&doc.doc.source, doc.domain().name(), stratify);
                    weights
                        .entry(s)
                        .or_default()
                        .push((doc.doc.id.clone(), doc.doc.token_count, 1.0));
                }
            }
        }
        Strategy::Uniform => {
            for doc in corpus {
                let s = stratum_of(&doc.doc.source, doc.domain().name(), stratify);
                weights
                    .entry(s)
                    .or_default()
                    .push((doc.doc.id.clone(), doc.doc.token_count, 1.0));
            }
        }
        Strategy::Temperature { criterion, tau } => {
            let levels: Vec<f64> = corpus
                .iter()
                .map(|d| rating_or_err(d, *criterion).map(|r| r as f64))
                .collect::<Result<_, _>>()?;
            let z = standardize(&levels);
            for (i, doc) in corpus.iter().enumerate() {
                let s = stratum_of(&doc.doc.source, doc.domain().name(), stratify);
                let zi = z.as_ref().map(|z| z[i]).unwrap_or(0.0);
                z_for.push((s.clone(), doc.doc.id.clone(), doc.doc.token_count, zi));
                let w = match (&z, *tau) {
                    (None, _) => 1.0,
                    (Some(_), t) if t == 0.0 => f64::NAN, // handled below
                    // Gumbel top selection with scores z/tau equals weighted
                    // draws without replacement with weights exp(z/tau).
                    (Some(z), t) => (z[i] / t).exp(),
                };
                weights.entry(s).or_default().push((
                    doc.doc.id.clone(),
                    doc.doc.token_count,
                    w,
                ));
            }
        }
        _ => return Err(SampleError::OracleUnsupported),
    }
    if weights.values().all(|v| v.is_empty()) || weights.is_empty() {
        return Err(SampleError::EmptyCandidates);
    }

    let probs_full = match &spec.strategy {
        Strategy::FixedLevel { .. }
        | Strategy::Uniform
        | Strategy::CriterionWeighted { .. }
        | Strategy::Temperature { .. } => {
            estimate_joint(corpus)?.stratum_probs(stratify)
        }
        _ => unreachable!(),
    };
    let available: BTreeMap<String, u64> = probs_full
        .keys()
        .map(|k| {
            let have = weights
                .get(k)
                .map(|cs| cs.iter().map(|(_, t, _)| *t).sum())
                .unwrap_or(0);
            (k.clone(), have)
        })
        .collect();
    let budgets = resolve_budgets(spec.token_budget, &probs_full, &available, spec.shortfall)?;

    let mut result: BTreeMap<String, f64> = BTreeMap::new();
    let deterministic_top = matches!(
        &spec.strategy,
        Strategy::Temperature { tau, .. } if *tau == 0.0
    ) && z_for.iter().any(|(_, _, _, z)| *z != 0.0);

    for (stratum, docs) in &weights {
        let budget = budgets.get(stratum).copied().unwrap_or(0);
        if deterministic_top {
            // tau = 0: the taken set is the deterministic top prefix by z.
            let mut in_stratum: Vec<&(String, String, u64, f64)> =
                z_for.iter().filter(|(s, ..)| s == stratum).collect();
            in_stratum.sort_by(|a, b| b.3.total_cmp(&a.3).then_with(|| a.1.cmp(&b.1)));
            let mut tokens = 0u64;
            for (_, id, t, _) in in_stratum {
                let p = if tokens < budget { 1.0 } else { 0.0 };
                result.insert(id.clone(), p);
                if tokens < budget {
                    tokens += t;
                }
            }
        } else {
            let mut acc: BTreeMap<String, f64> = docs.iter().map(|(id, _, _)| (id.clone(), 0.0)).collect();
            enumerate_draws(docs, &mut vec![false; docs.len()], 0, budget, 1.0, &mut acc);
            result.extend(acc);
        }
    }
    Ok(result)
}

/// Recursive enumeration of sequential weighted draws without replacement,
/// stopping each branch once its cumulative tokens reach the budget.
fn enumerate_draws(
    docs: &[(String, u64, f64)],
    used: &mut Vec<bool>,
    tokens: u64,
    budget: u64,
    prob: f64,
    acc: &mut BTreeMap<String, f64>,
) {
    if tokens >= budget {
        return;
    }
    let total_w: f64 = docs
        .iter()
        .zip(used.iter())
        .filter(|(_, &u)| !u)
        .map(|((_, _, w), _)| *w)
        .sum();
    if total_w == 0.0 {
        return;
    }
    for i in 0..docs.len() {
        if used[i] {
            continue;
        }
        let (id, t, w) = &docs[i];
        let p = prob * w / total_w;
        *acc.get_mut(id).unwrap() += p;
        used[i] = true;
        enumerate_draws(docs, used, tokens + t, budget, p, acc);
        used[i] = false;
    }
}

/// Union manifests by doc_id (first occurrence wins), then uniformly
/// subsample back to `budget` tokens with fresh PRF keys. Parent digests are
/// recorded in the output.
pub fn merge_subsets(
    manifests: &[SubsetManifest],
    budget: u64,
    seed: u64,
) -> Result<SubsetManifest, SampleError> {
    if manifests.is_empty() {
        return Err(SampleError::EmptyCandidates);
    }
    let mut seen = BTreeSet::new();
    let mut union: Vec<ManifestRow> = Vec::new();
    for m in manifests {
        for row in &m.rows {
            if seen.insert(row.doc_id.clone()) {
                union.push(row.clone());
            }
        }
    }
    let candidates: Vec<Candidate> = union
        .into_iter()
        .map(|row| {
            let key = prf::uniform(seed, "merge", &row.doc_id);
            Candidate {
                doc_id: row.doc_id,
                source: row.source,
                domain: row.domain,
                overall_score: row.overall_score,
                token_count: row.token_count,
                weight: 1.0,
                key,
            }
        })
        .collect();
    let taken = take_until(candidates, budget);
    let rows: Vec<ManifestRow> = taken
        .into_iter()
        .map(|c| ManifestRow {
            doc_id: c.doc_id,
            source: c.source,
            domain: c.domain,
            overall_score: c.overall_score,
            token_count: c.token_count,
            weight: c.weight,
            key: c.key,
        })
        .collect();
    let spec = SampleSpec {
        strategy: Strategy::Uniform,
        token_budget: budget,
        seed,
        stratify: Stratify::None,
        shortfall: Shortfall::Redistribute,
        restrict_to_top_rated: false,
    };
    let parents = manifests.iter().map(|m| m.digest.clone()).collect();
    Ok(finish_manifest(&spec, rows, parents))
}

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    spec: SampleSpec,
    seed: u64,
    prf: String,
    total_tokens: u64,
    digest: String,
    #[serde(default)]
    parents: Vec<String>,
}

/// Write a manifest as JSONL: one header line, then one row per document.
pub fn write_manifest(path: &Path, manifest: &SubsetManifest) -> Result<(), SampleError> {
    let mut out = BufWriter::new(File::create(path)?);
    let header = ManifestHeader {
        spec: manifest.spec.clone(),
        seed: manifest.seed,
        prf: manifest.prf.clone(),
        total_tokens: manifest.total_tokens,
        digest: manifest.digest.clone(),
        parents: manifest.parents.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for row in &manifest.rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<SubsetManifest, SampleError> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header_line = lines.next().ok_or(SampleError::MissingHeader)??;
    let header: ManifestHeader = serde_json::from_str(&header_line)?;
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line)?);
    }
    Ok(SubsetManifest {
        spec: header.spec,
        seed: header.seed,
        prf: header.prf,
        total_tokens: header.total_tokens,
        digest: header.digest,
        parents: header.parents,
        rows,
    })
}
