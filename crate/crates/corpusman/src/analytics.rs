//! Quantitative instruments: squared-error loss, truncated NDCG with its
//! loss-based error bound, correlation coefficients, inter-rater agreement,
//! rater accuracy reports, and corpus-level distribution studies.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::AnnotatedDocument;
use crate::schema::{Criterion, ALL_CRITERIA, RATING_LEVELS};

#[derive(Debug, Error)]
pub enum StatError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {0} observations")]
    TooFew(usize),
    #[error("correlation undefined for constant input")]
    ConstantInput,
    #[error("raters constant but disagreeing, kappa degenerate")]
    DegenerateAgreement,
    #[error("row {0} sums to {1}, expected {2} raters")]
    RowSumMismatch(usize, usize, usize),
    #[error("gold level out of range: {0}")]
    LevelOutOfRange(i64),
}

/// Paired predictions and integer gold levels.
#[derive(Debug, Clone)]
pub struct RatingVector {
    pub predicted: Vec<f64>,
    pub gold: Vec<u8>,
}

impl RatingVector {
    pub fn new(predicted: Vec<f64>, gold: Vec<u8>) -> Result<RatingVector, StatError> {
        if predicted.len() != gold.len() {
            return Err(StatError::LengthMismatch(predicted.len(), gold.len()));
        }
        if predicted.is_empty() {
            return Err(StatError::TooFew(1));
        }
        Ok(RatingVector { predicted, gold })
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }
}

/// Gain and discount configuration for NDCG. Gain is fixed at 2^z - 1;
/// discount is 1/log2(1+z) up to depth `truncation`, zero beyond it.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NdcgConfig {
    pub truncation: usize,
}

impl Default for NdcgConfig {
    fn default() -> Self {
        NdcgConfig { truncation: 10 }
    }
}

fn gain(level: u8) -> f64 {
    (1u64 << level) as f64 - 1.0
}

fn discount(position: usize, m: usize) -> f64 {
    if position <= m {
        1.0 / ((1.0 + position as f64).log2())
    } else {
        0.0
    }
}

/// Sum of squared residuals between predictions and gold levels.
pub fn pointwise_loss(v: &RatingVector) -> f64 {
    v.predicted
        .iter()
        .zip(&v.gold)
        .map(|(&p, &g)| (p - g as f64).powi(2))
        .sum()
}

/// Item order induced by sorting predictions descending, prediction ties
/// broken by ascending item index.
fn ranking(predicted: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..predicted.len()).collect();
    order.sort_by(|&a, &b| predicted[b].total_cmp(&predicted[a]).then(a.cmp(&b)));
    order
}

fn dcg_of(gains_in_rank_order: impl Iterator<Item = f64>, m: usize) -> f64 {
    gains_in_rank_order
        .enumerate()
        .map(|(i, g)| g * discount(i + 1, m))
        .sum()
}

/// Ideal (maximum attainable) DCG: gold gains sorted descending.
fn ideal_dcg(gold: &[u8], m: usize) -> f64 {
    let mut gains: Vec<f64> = gold.iter().map(|&g| gain(g)).collect();
    gains.sort_by(|a, b| b.total_cmp(a));
    dcg_of(gains.into_iter(), m)
}

/// Normalized discounted cumulative gain of the prediction-induced ranking.
pub fn ndcg(v: &RatingVector, cfg: NdcgConfig) -> f64 {
    let m = cfg.truncation;
    let order = ranking(&v.predicted);
    let dcg = dcg_of(order.iter().map(|&i| gain(v.gold[i])), m);
    dcg / ideal_dcg(&v.gold, m)
}

/// Upper bound on the ranking error 1 - NDCG in terms of the squared loss:
/// (15 sqrt 2 / N) * (sum D^2 - n * prod D^(2/n))^(1/2) * loss^(1/2),
/// where D are the position discounts and N the ideal DCG. The middle term
/// is nonnegative by the AM-GM inequality; tiny negative values from
/// floating rounding are clamped to zero.
pub fn ndcg_bound_rhs(v: &RatingVector, cfg: NdcgConfig) -> f64 {
    let n = v.len();
    let m = cfg.truncation;
    let discounts: Vec<f64> = (1..=n).map(|p| discount(p, m)).collect();
    let sum_sq: f64 = discounts.iter().map(|d| d * d).sum();
    let geo: f64 = if discounts.iter().any(|&d| d == 0.0) {
        0.0
    } else {
        // Product of D^(2/n) computed in log space for stability.
        (discounts.iter().map(|d| d.ln()).sum::<f64>() * 2.0 / n as f64).exp()
    };
    let spread = (sum_sq - n as f64 * geo).max(0.0);
    let loss = pointwise_loss(v);
    15.0 * std::f64::consts::SQRT_2 / ideal_dcg(&v.gold, m) * spread.sqrt() * loss.sqrt()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Product-moment correlation coefficient. Constant input is an error, not
/// a silent zero.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatError> {
    if x.len() != y.len() {
        return Err(StatError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatError::TooFew(2));
    }
    let (mx, my) = (mean(x), mean(y));
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(StatError::ConstantInput);
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// Average ranks with ties receiving the mean rank of their block.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; the tied block shares the mean rank.
        let shared = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Rank correlation: pearson over average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatError> {
    if x.len() != y.len() {
        return Err(StatError::LengthMismatch(x.len(), y.len()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Two-rater chance-corrected agreement with marginal-product chance. Both
/// raters constant and identical gives 1.0 by convention; constant but
/// disagreeing is degenerate.
pub fn cohen_kappa(a: &[i64], b: &[i64]) -> Result<f64, StatError> {
    if a.len() != b.len() {
        return Err(StatError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatError::TooFew(1));
    }
    let n = a.len() as f64;
    let mut ma: BTreeMap<i64, f64> = BTreeMap::new();
    let mut mb: BTreeMap<i64, f64> = BTreeMap::new();
    let mut agree = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1.0;
        *mb.entry(y).or_default() += 1.0;
        if x == y {
            agree += 1.0;
        }
    }
    let p_o = agree / n;
    let p_e: f64 = ma
        .iter()
        .map(|(label, ca)| ca / n * mb.get(label).copied().unwrap_or(0.0) / n)
        .sum();
    // Both raters constant: identical sequences agree perfectly, differing
    // ones leave chance correction undefined.
    if ma.len() == 1 && mb.len() == 1 {
        if p_o == 1.0 {
            return Ok(1.0);
        }
        return Err(StatError::DegenerateAgreement);
    }
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(StatError::DegenerateAgreement);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Multi-rater agreement over an item-by-category vote count matrix; every
/// row must sum to `raters_per_item`.
pub fn fleiss_kappa(ratings: &[Vec<usize>], raters_per_item: usize) -> Result<f64, StatError> {
    if ratings.is_empty() {
        return Err(StatError::TooFew(1));
    }
    let m = raters_per_item;
    if m < 2 {
        return Err(StatError::TooFew(2));
    }
    let k = ratings[0].len();
    let n = ratings.len();
    let mut category_totals = vec![0.0; k];
    let mut p_bar = 0.0;
    for (row_idx, row) in ratings.iter().enumerate() {
        let sum: usize = row.iter().sum();
        if sum != m || row.len() != k {
            return Err(StatError::RowSumMismatch(row_idx, sum, m));
        }
        let agree: usize = row.iter().map(|&c| c * c).sum();
        p_bar += (agree - m) as f64 / (m * (m - 1)) as f64;
        for (j, &c) in row.iter().enumerate() {
            category_totals[j] += c as f64;
        }
    }
    p_bar /= n as f64;
    let p_e: f64 = category_totals
        .iter()
        .map(|t| (t / (n * m) as f64).powi(2))
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        if (p_bar - 1.0).abs() < 1e-15 {
            return Ok(1.0);
        }
        return Err(StatError::DegenerateAgreement);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// How the numbers in a report were computed, embedded so every report is
/// self-describing.
#[derive(Debug, Clone, Serialize)]
pub struct Method {
    pub ndcg_truncation: Option<usize>,
    pub tie_rule: &'static str,
    pub error_rate_denominators: &'static str,
}

fn accuracy_method() -> Method {
    Method {
        ndcg_truncation: None,
        tie_rule: "prediction ties rank by ascending item index",
        error_rate_denominators: "gold-condition subset counts",
    }
}

/// Accuracy and misclassification breakdown over paired gold/predicted
/// levels, with the full confusion matrix included so alternative error
/// definitions can be recomputed.
#[derive(Debug, Clone, Serialize)]
pub struct AccuracyReport {
    pub n: usize,
    pub five_level_acc: f64,
    /// Agreement after thresholding both sides at level >= 3.
    pub binary_acc: f64,
    /// Binary accuracy restricted to gold >= 3.
    pub positive_acc: Option<f64>,
    /// Binary accuracy restricted to gold < 3.
    pub negative_acc: Option<f64>,
    /// Exact and within-one-level agreement.
    pub exact_agreement: f64,
    pub within_one_agreement: f64,
    /// Error rates over gold-condition denominators; absent when the
    /// denominator subset is empty.
    pub rate_gold_lt2_pred_ge3: Option<f64>,
    pub rate_gold_2_pred_gt3: Option<f64>,
    pub rate_gold_2_pred_eq3: Option<f64>,
    pub rate_gold_ge4_pred_lt3: Option<f64>,
    pub rate_gold_3_pred_lt3: Option<f64>,
    /// confusion[g-1][p-1] = count of (gold g, predicted p).
    pub confusion: [[usize; 5]; 5],
    pub method: Method,
}

pub fn accuracy_report(gold: &[u8], pred: &[u8]) -> Result<AccuracyReport, StatError> {
    if gold.len() != pred.len() {
        return Err(StatError::LengthMismatch(gold.len(), pred.len()));
    }
    if gold.is_empty() {
        return Err(StatError::TooFew(1));
    }
    for &l in gold.iter().chain(pred) {
        if !(1..=RATING_LEVELS).contains(&l) {
            return Err(StatError::LevelOutOfRange(l as i64));
        }
    }
    let n = gold.len();
    let mut confusion = [[0usize; 5]; 5];
    for (&g, &p) in gold.iter().zip(pred) {
        confusion[g as usize - 1][p as usize - 1] += 1;
    }
    let rate = |cond: &dyn Fn(u8) -> bool, err: &dyn Fn(u8, u8) -> bool| -> Option<f64> {
        let denom = gold.iter().filter(|&&g| cond(g)).count();
        if denom == 0 {
            return None;
        }
        let num = gold
            .iter()
            .zip(pred)
            .filter(|&(&g, &p)| cond(g) && err(g, p))
            .count();
        Some(num as f64 / denom as f64)
    };
    let count = |f: &dyn Fn(u8, u8) -> bool| gold.iter().zip(pred).filter(|&(&g, &p)| f(g, p)).count();
    Ok(AccuracyReport {
        n,
        five_level_acc: count(&|g, p| g == p) as f64 / n as f64,
        binary_acc: count(&|g, p| (g >= 3) == (p >= 3)) as f64 / n as f64,
        positive_acc: rate(&|g| g >= 3, &|_, p| p < 3).map(|e| 1.0 - e),
        negative_acc: rate(&|g| g < 3, &|_, p| p >= 3).map(|e| 1.0 - e),
        exact_agreement: count(&|g, p| g == p) as f64 / n as f64,
        within_one_agreement: count(&|g, p| (g as i8 - p as i8).abs() <= 1) as f64 / n as f64,
        rate_gold_lt2_pred_ge3: rate(&|g| g < 2, &|_, p| p >= 3),
        rate_gold_2_pred_gt3: rate(&|g| g == 2, &|_, p| p > 3),
        rate_gold_2_pred_eq3: rate(&|g| g == 2, &|_, p| p == 3),
        rate_gold_ge4_pred_lt3: rate(&|g| g >= 4, &|_, p| p < 3),
        rate_gold_3_pred_lt3: rate(&|g| g == 3, &|_, p| p < 3),
        confusion,
        method: accuracy_method(),
    })
}

/// Histogram of one criterion's levels within one source.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Histogram {
    pub counts: [u64; 5],
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn proportions(&self) -> [f64; 5] {
        let t = self.total().max(1) as f64;
        self.counts.map(|c| c as f64 / t)
    }
}

/// Per (source, criterion) level histograms.
#[derive(Debug, Clone, Default, Serialize)]
pub struct DistributionReport {
    /// source -> criterion key -> histogram.
    pub by_source: BTreeMap<String, BTreeMap<String, Histogram>>,
}

pub fn rating_distribution(corpus: &[AnnotatedDocument]) -> DistributionReport {
    let mut report = DistributionReport::default();
    for doc in corpus {
        let per_source = report.by_source.entry(doc.doc.source.clone()).or_default();
        for c in ALL_CRITERIA {
            if let Some(level) = doc.rating(c) {
                if (1..=RATING_LEVELS).contains(&level) {
                    per_source.entry(c.key().to_string()).or_default().counts
                        [level as usize - 1] += 1;
                }
            }
        }
    }
    report
}

/// Correlation between one criterion's ratings and document nll.
#[derive(Debug, Clone, Serialize)]
pub struct NllCorrelation {
    pub criterion: String,
    pub n: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NllCorrelationReport {
    pub rows: Vec<NllCorrelation>,
    pub excluded_missing_nll: usize,
}

pub fn criterion_nll_correlation(corpus: &[AnnotatedDocument]) -> NllCorrelationReport {
    let with_nll: Vec<&AnnotatedDocument> =
        corpus.iter().filter(|d| d.doc.nll.is_some()).collect();
    let excluded = corpus.len() - with_nll.len();
    let nll: Vec<f64> = with_nll.iter().map(|d| d.doc.nll.unwrap()).collect();
    let rows = ALL_CRITERIA
        .iter()
        .map(|&c| {
            let pairs: Vec<(f64, f64)> = with_nll
                .iter()
                .zip(&nll)
                .filter_map(|(d, &v)| d.rating(c).map(|r| (r as f64, v)))
                .collect();
            let (ratings, nlls): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            NllCorrelation {
                criterion: c.key().to_string(),
                n: ratings.len(),
                pearson: pearson(&ratings, &nlls).ok(),
                spearman: spearman(&ratings, &nlls).ok(),
            }
        })
        .collect();
    NllCorrelationReport {
        rows,
        excluded_missing_nll: excluded,
    }
}

/// Convenience: the rating of `criterion` for every document that has one.
pub fn criterion_levels(corpus: &[AnnotatedDocument], criterion: Criterion) -> Vec<u8> {
    corpus.iter().filter_map(|d| d.rating(criterion)).collect()
}
