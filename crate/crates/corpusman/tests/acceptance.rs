//! Acceptance gate: one test per criterion, each printing a PASS line once
//! its assertions hold. Tolerances are stated inline; timing limits are
//! asserted with `std::time::Instant`.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use corpusman::analytics::{
    self, accuracy_report, average_ranks, cohen_kappa, fleiss_kappa, ndcg, ndcg_bound_rhs,
    pearson, pointwise_loss, spearman, NdcgConfig, RatingVector,
};
use corpusman::anomaly::{extract_anomalies, GroupBy};
use corpusman::corpus::{AnnotatedDocument, Cell, CorpusStats, Document, RawDocument};
use corpusman::curate::{strip_replica, upsample_low, BalancePolicy};
use corpusman::rater::mock_rate;
use corpusman::sampler::{
    estimate_joint, inclusion_oracle, sample, SampleSpec, Shortfall, Strategy, Stratify,
};
use corpusman::schema::{
    parse_all_rating, render_annotation, render_prompt, AnnotationRecord, Criterion, DomainType,
    PromptMode, ALL_CRITERIA, ALL_DOMAINS,
};
use corpusman::tokenizer::WhitespacePunct;

fn pass(name: &str) {
    println!("ACCEPTANCE {name}: PASS");
}

fn record(doc_id: &str, levels: [u8; 14], domain: DomainType) -> AnnotationRecord {
    AnnotationRecord {
        doc_id: doc_id.to_string(),
        ratings: ALL_CRITERIA.iter().copied().zip(levels).collect(),
        domain,
    }
}

fn annotated(
    id: &str,
    source: &str,
    overall: u8,
    domain: DomainType,
    tokens: u64,
    nll: Option<f64>,
) -> AnnotatedDocument {
    AnnotatedDocument {
        doc: Document {
            id: id.to_string(),
            source: source.to_string(),
            text: String::new(),
            token_count: tokens,
            nll,
        },
        annotation: record(id, [overall; 14], domain),
    }
}

// Criterion 1: published overall-score histograms reproduce their level
// proportions within +/-0.005 percentage points.
#[test]
fn proportion_reproduction() {
    let start = Instant::now();
    let corpus_counts: [(u8, u64); 5] = [
        (1, 3_681_879),
        (2, 29_504_959),
        (3, 36_156_824),
        (4, 198_088_168),
        (5, 169_558_482),
    ];
    let mut stats = CorpusStats::default();
    for (level, count) in corpus_counts {
        stats.by_overall_score.insert(level, Cell { docs: count, tokens: 0 });
        stats.total.docs += count;
    }
    let expected_pct = [(5, 38.80), (4, 45.33), (3, 8.27), (2, 6.75), (1, 0.84)];
    for (level, pct) in expected_pct {
        let got = stats.score_proportion(level) * 100.0;
        assert!(
            (got - pct).abs() <= 0.005,
            "level {level}: {got:.4}% vs {pct}%"
        );
    }

    let finetune_counts: [(u8, u64); 5] = [
        (1, 4_293),
        (2, 22_423),
        (3, 51_571),
        (4, 161_225),
        (5, 100_242),
    ];
    let mut stats = CorpusStats::default();
    for (level, count) in finetune_counts {
        stats.by_overall_score.insert(level, Cell { docs: count, tokens: 0 });
        stats.total.docs += count;
    }
    let got = stats.score_proportion(1) * 100.0;
    assert!((got - 1.26).abs() <= 0.005, "level 1: {got:.4}%");
    assert!(start.elapsed().as_secs_f64() < 1.0);
    pass("proportion_reproduction");
}

fn random_small_corpus(rng: &mut ChaCha8Rng) -> Vec<AnnotatedDocument> {
    let n = rng.gen_range(2..=6);
    (0..n)
        .map(|i| {
            let overall = rng.gen_range(1..=5);
            annotated(
                &format!("d{i}"),
                "S",
                overall,
                DomainType::Other,
                rng.gen_range(1..=3),
                None,
            )
        })
        .collect()
}

// Criterion 2: empirical inclusion frequencies match the exact enumeration
// oracle within 3 binomial standard deviations, for every strategy family.
#[test]
fn sampler_oracle_agreement() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    // 100,000 seeded runs per strategy family, spread over 20 corpora.
    let runs_per_corpus = 5_000u64;
    for corpus_idx in 0..20u64 {
        let corpus = random_small_corpus(&mut rng);
        let total_tokens: u64 = corpus.iter().map(|d| d.doc.token_count).sum();
        let budget = (total_tokens / 2).max(1);
        let level_present = corpus[0].overall_score();
        let strategies = [
            Strategy::CriterionWeighted { criterion: Criterion::OverallScore },
            Strategy::FixedLevel { level: level_present },
            Strategy::Temperature { criterion: Criterion::OverallScore, tau: 0.0 },
            Strategy::Temperature { criterion: Criterion::OverallScore, tau: 0.5 },
            Strategy::Temperature { criterion: Criterion::OverallScore, tau: 2.0 },
            Strategy::Uniform,
        ];
        for strategy in strategies {
            let base = SampleSpec {
                strategy: strategy.clone(),
                token_budget: budget,
                seed: 0,
                stratify: Stratify::None,
                shortfall: Shortfall::Redistribute,
                restrict_to_top_rated: false,
            };
            let exact = inclusion_oracle(&corpus, &base).unwrap();
            let joint = estimate_joint(&corpus).unwrap();
            let mut hits: BTreeMap<String, u64> =
                exact.keys().map(|k| (k.clone(), 0)).collect();
            for run in 0..runs_per_corpus {
                let spec = SampleSpec {
                    seed: corpus_idx * 1_000_000 + run,
                    ..base.clone()
                };
                let manifest = sample(&corpus, &spec, &joint).unwrap();
                for row in &manifest.rows {
                    *hits.get_mut(&row.doc_id).unwrap() += 1;
                }
            }
            for (doc_id, &p) in &exact {
                let emp = hits[doc_id] as f64 / runs_per_corpus as f64;
                let sd = (p * (1.0 - p) / runs_per_corpus as f64).sqrt();
                assert!(
                    (emp - p).abs() <= 3.0 * sd + 1e-9,
                    "corpus {corpus_idx} strategy {strategy:?} doc {doc_id}: \
                     empirical {emp:.4} vs exact {p:.4} (3sd {:.4})",
                    3.0 * sd
                );
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 120.0, "took {secs:.1}s");
    pass("sampler_oracle_agreement");
}

// Criterion 3: selected token mass per stratum tracks budget * P(s,q)
// within one document plus rounding, on a 12-stratum synthetic corpus.
#[test]
fn stratification_fidelity() {
    let start = Instant::now();
    let tokens_per_doc = 10u64;
    let sources = ["web", "book", "news"];
    let domains = [
        DomainType::Law,
        DomainType::Medicine,
        DomainType::Coding,
        DomainType::Other,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let corpus: Vec<AnnotatedDocument> = (0..10_000)
        .map(|i| {
            annotated(
                &format!("d{i:05}"),
                sources[rng.gen_range(0..3)],
                rng.gen_range(1..=5),
                domains[rng.gen_range(0..4)],
                tokens_per_doc,
                None,
            )
        })
        .collect();
    let joint = estimate_joint(&corpus).unwrap();
    assert_eq!(joint.joint.len(), 12);
    let budget = (joint.total_tokens as f64 * 0.3) as u64;
    let spec = SampleSpec {
        strategy: Strategy::CriterionWeighted { criterion: Criterion::OverallScore },
        token_budget: budget,
        seed: 17,
        stratify: Stratify::SourceAndDomain,
        shortfall: Shortfall::Redistribute,
        restrict_to_top_rated: false,
    };
    let manifest = sample(&corpus, &spec, &joint).unwrap();
    let mut per_stratum: BTreeMap<(String, String), u64> = BTreeMap::new();
    for row in &manifest.rows {
        *per_stratum
            .entry((row.source.clone(), row.domain.clone()))
            .or_default() += row.token_count;
    }
    for (key, &mass) in &joint.joint {
        let ideal = budget as f64 * mass as f64 / joint.total_tokens as f64;
        let got = per_stratum.get(key).copied().unwrap_or(0) as f64;
        assert!(
            (got - ideal).abs() <= tokens_per_doc as f64 + 1.0,
            "stratum {key:?}: {got} vs ideal {ideal:.1}"
        );
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 10.0, "took {secs:.1}s");
    pass("stratification_fidelity");
}

// Criterion 4: manifest digests are identical at worker counts 1, 4, 8
// across 10 different specs.
#[test]
fn determinism_across_worker_counts() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let corpus: Vec<AnnotatedDocument> = (0..2_000)
        .map(|i| {
            annotated(
                &format!("d{i:04}"),
                ["web", "book"][rng.gen_range(0..2)],
                rng.gen_range(1..=5),
                ALL_DOMAINS[rng.gen_range(0..15)],
                rng.gen_range(5..=15),
                Some(rng.gen_range(0.5..8.0)),
            )
        })
        .collect();
    let joint = estimate_joint(&corpus).unwrap();
    let specs: Vec<SampleSpec> = (0..10)
        .map(|i| SampleSpec {
            strategy: match i % 5 {
                0 => Strategy::CriterionWeighted { criterion: ALL_CRITERIA[i] },
                1 => Strategy::Uniform,
                2 => Strategy::Temperature { criterion: Criterion::OverallScore, tau: 0.7 },
                3 => Strategy::FixedLevel { level: (i as u8 % 5) + 1 },
                _ => Strategy::Perplexity { highest: i % 2 == 0 },
            },
            token_budget: 2_000 + 500 * i as u64,
            seed: 100 + i as u64,
            stratify: Stratify::SourceAndDomain,
            shortfall: Shortfall::Redistribute,
            restrict_to_top_rated: false,
        })
        .collect();
    for spec in &specs {
        let digests: Vec<String> = [1usize, 4, 8]
            .iter()
            .map(|&workers| {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .unwrap();
                pool.install(|| sample(&corpus, spec, &joint).unwrap().digest)
            })
            .collect();
        assert_eq!(digests[0], digests[1], "spec {spec:?}");
        assert_eq!(digests[0], digests[2], "spec {spec:?}");
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 30.0, "took {secs:.1}s");
    pass("determinism_across_worker_counts");
}

// Criterion 5: tau = 0 temperature sampling equals the deterministic top
// selection by standardized score, ties by doc id.
#[test]
fn temperature_zero_is_exact_top_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let corpus: Vec<AnnotatedDocument> = (0..500)
        .map(|i| {
            annotated(
                &format!("d{i:03}"),
                "web",
                rng.gen_range(1..=5),
                DomainType::Other,
                rng.gen_range(1..=20),
                None,
            )
        })
        .collect();
    let joint = estimate_joint(&corpus).unwrap();
    let budget = joint.total_tokens / 3;
    let spec = SampleSpec {
        strategy: Strategy::Temperature { criterion: Criterion::OverallScore, tau: 0.0 },
        token_budget: budget,
        seed: 99,
        stratify: Stratify::None,
        shortfall: Shortfall::Redistribute,
        restrict_to_top_rated: false,
    };
    let manifest = sample(&corpus, &spec, &joint).unwrap();

    // Independent reference: population z-scores, sort, greedy take.
    let levels: Vec<f64> = corpus.iter().map(|d| d.overall_score() as f64).collect();
    let mean = levels.iter().sum::<f64>() / levels.len() as f64;
    let sd = (levels.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / levels.len() as f64).sqrt();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.sort_by(|&a, &b| {
        let za = (levels[a] - mean) / sd;
        let zb = (levels[b] - mean) / sd;
        zb.total_cmp(&za).then_with(|| corpus[a].doc.id.cmp(&corpus[b].doc.id))
    });
    let mut expected = Vec::new();
    let mut tokens = 0u64;
    for idx in order {
        if tokens >= budget {
            break;
        }
        tokens += corpus[idx].doc.token_count;
        expected.push(corpus[idx].doc.id.clone());
    }
    let got: Vec<String> = manifest.rows.iter().map(|r| r.doc_id.clone()).collect();
    assert_eq!(got, expected);
    pass("temperature_zero_is_exact_top_k");
}

// Criterion 6: the loss-based bound dominates the ranking error on 1,000
// random instances, and zero-loss instances sit exactly at (0, 0).
#[test]
fn ndcg_bound_property() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..1_000 {
        let n = rng.gen_range(1..=20usize);
        let gold: Vec<u8> = (0..n).map(|_| rng.gen_range(1..=5)).collect();
        let predicted: Vec<f64> = gold
            .iter()
            .map(|&g| g as f64 + rng.gen_range(-1.5..1.5))
            .collect();
        let m = match trial % 3 {
            0 => 5,
            1 => 10,
            _ => n,
        };
        let cfg = NdcgConfig { truncation: m };
        let v = RatingVector::new(predicted, gold.clone()).unwrap();
        let lhs = 1.0 - ndcg(&v, cfg);
        let rhs = ndcg_bound_rhs(&v, cfg);
        assert!(lhs <= rhs + 1e-9, "trial {trial}: 1-ndcg {lhs} > rhs {rhs}");

        let perfect = RatingVector::new(gold.iter().map(|&g| g as f64).collect(), gold).unwrap();
        assert_eq!(pointwise_loss(&perfect), 0.0);
        assert_eq!(ndcg_bound_rhs(&perfect, cfg), 0.0);
        assert!((ndcg(&perfect, cfg) - 1.0).abs() < 1e-12);
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 5.0, "took {secs:.1}s");
    pass("ndcg_bound_property");
}

// Criterion 7: correlation and agreement statistics reproduce hand-computed
// values to 1e-9, and spearman cross-checks against pearson-of-ranks.
#[test]
fn statistics_oracles() {
    let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
    assert!((r - 0.8).abs() < 1e-9);
    let s = spearman(&[1.0, 2.0, 3.0], &[9.0, 9.0, 10.0]).unwrap();
    assert!((s - 0.866_025_403_784_438_7).abs() < 1e-9);
    let k = cohen_kappa(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap();
    assert!(k.abs() < 1e-9);
    let f = fleiss_kappa(&[vec![1, 1], vec![1, 1]], 2).unwrap();
    assert!((f + 1.0).abs() < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let n = rng.gen_range(3..=50usize);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..10) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0..10) as f64).collect();
        let (Ok(direct), Ok(via)) = (
            spearman(&x, &y),
            pearson(&average_ranks(&x), &average_ranks(&y)),
        ) else {
            continue; // constant draw, undefined by contract
        };
        assert!((direct - via).abs() < 1e-12);
    }
    pass("statistics_oracles");
}

// Criterion 8: the accuracy report reproduces hand-counted rates exactly
// and its confusion matrix marginals match the inputs.
#[test]
fn accuracy_report_exact() {
    let report = accuracy_report(&[5, 4, 3, 2, 1], &[5, 4, 3, 3, 1]).unwrap();
    assert_eq!(report.five_level_acc, 0.8);
    assert_eq!(report.binary_acc, 0.8);
    assert_eq!(report.rate_gold_2_pred_eq3, Some(1.0));
    assert_eq!(report.rate_gold_2_pred_gt3, Some(0.0));
    assert_eq!(report.rate_gold_lt2_pred_ge3, Some(0.0));
    assert_eq!(report.rate_gold_ge4_pred_lt3, Some(0.0));
    assert_eq!(report.rate_gold_3_pred_lt3, Some(0.0));

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let gold: Vec<u8> = (0..500).map(|_| rng.gen_range(1..=5)).collect();
    let pred: Vec<u8> = (0..500).map(|_| rng.gen_range(1..=5)).collect();
    let report = accuracy_report(&gold, &pred).unwrap();
    for level in 1..=5u8 {
        let row: usize = report.confusion[level as usize - 1].iter().sum();
        assert_eq!(row, gold.iter().filter(|&&g| g == level).count());
        let col: usize = (0..5).map(|g| report.confusion[g][level as usize - 1]).sum();
        assert_eq!(col, pred.iter().filter(|&&p| p == level).count());
    }
    pass("accuracy_report_exact");
}

const EXPECTED_SCORE_ONLY: &str =
    "Please give an overall score for the text:\nText: SAMPLE\nOverall Score:_/5\n";

const EXPECTED_DOMAIN_ONLY: &str =
    "Please specify an domain type for the text:\nText: SAMPLE\nDomain:_\n";

const EXPECTED_ALL_RATING: &str = "\
Please score the text on fourteen evaluation criteria and specify its domain:
Text: SAMPLE
Domain:_
[1]Accuracy:_/5
[2]Coherence:_/5
[3]Language Consistency:_/5
[4]Semantic Density:_/5
[5]Knowledge Novelty:_/5
[6]Topic Focus:_/5
[7]Creativity:_/5
[8]Professionalism:_/5
[9]Style Consistency:_/5
[10]Grammatical Diversity:_/5
[11]Structural Standardization:_/5
[12]Originality:_/5
[13]Sensitivity:_/5
[14]Overall Score:_/5
";

const EXPECTED_FULL: &str = "\
Please carefully read and analyze the following text, score it based on fourteen evaluation criteria and their respective scoring definitions. Additionally, select the most appropriate category from the fifteen domain types that best matches the content of the text. Let's think step by step.

Text:SAMPLE

Domain Types:
[A]Medicine [B]Finance [C]Law [D]Education [E]Technology [F]Entertainment [G]Mathematics [H]Coding [I]Government [J]Culture [K]Transportation [L]Retail E-commerce [M]Telecommunication [N]Agriculture [O]Other

The Higher The Score, The Evaluation Criteria:
[1]Accuracy: the fewer grammar, referential, and spelling errors the text contains, and the more accurate its expression. _/5
[2]Coherence: the more fluent the content is expressed, and the stronger its logical coherence. _/5
[3]Language Consistency: the more consistent the use of language in the text, with less mixing of languages. _/5
[4]Semantic Density: the greater the proportion of valid information in the text, with less irrelevant or redundant information. _/5
[5]Knowledge Novelty: the more novel and cutting-edge the knowledge provided by the text, with more insightful views on the industry or topic. _/5
[6]Topic Focus: the more the text content focuses on the topic, with less deviation from the main theme. _/5
[7]Creativity: the more creative elements are shown in the text's expression. _/5
[8]Professionalism: the more professional terminology appears in the text, with more accurate use of terms and more professional domain-specific expression. _/5
[9]Style Consistency: the more consistent the style of the text, with proper and appropriate style transitions. _/5
[10]Grammatical Diversity: the more varied and correct the grammatical structures used in the text, showing a richer language expression ability. _/5
[11]Structural Standardization: the clearer the structure followed by the text and the more standardized its format. _/5
[12]Originality: the fewer repetitions and similar content in the text. _/5
[13]Sensitivity: the more appropriately sensitive topics are handled in the text, with less inappropriate content. _/5
[14]Overall Score: the better the comprehensive evaluation of the text, with superior performance in all aspects._/5
";

const EXPECTED_SYSTEM: &str = "You are an expert to evaluate the text quality with high accuracy \
and confidence. Don't hesitate to use the full range of the score scale, including extreme \
scores if the text warrants it.\n";

// Criterion 9: rendered prompts are byte-identical to the reference
// transcriptions, and parsing a rendered annotation is the identity.
#[test]
fn prompt_golden_files_and_round_trip() {
    assert_eq!(render_prompt(PromptMode::ScoreOnly, "SAMPLE"), EXPECTED_SCORE_ONLY);
    assert_eq!(render_prompt(PromptMode::DomainOnly, "SAMPLE"), EXPECTED_DOMAIN_ONLY);
    assert_eq!(render_prompt(PromptMode::AllRating, "SAMPLE"), EXPECTED_ALL_RATING);
    assert_eq!(render_prompt(PromptMode::Full, "SAMPLE"), EXPECTED_FULL);
    assert_eq!(corpusman::schema::SYSTEM_PROMPT, EXPECTED_SYSTEM);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..1_000 {
        let mut levels = [0u8; 14];
        for l in levels.iter_mut() {
            *l = rng.gen_range(1..=5);
        }
        let domain = ALL_DOMAINS[rng.gen_range(0..15)];
        let rec = record(&format!("doc-{i}"), levels, domain);
        let parsed = parse_all_rating(&render_annotation(&rec), &rec.doc_id).unwrap();
        assert_eq!(parsed, rec);
    }
    pass("prompt_golden_files_and_round_trip");
}

// Criterion 10: 2% tails of a 1,000-document source are exactly the 20
// lowest- and 20 highest-nll documents of an independent sort.
#[test]
fn anomaly_tails() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let docs: Vec<Document> = (0..1_000)
        .map(|i| Document {
            id: format!("d{i:04}"),
            source: "web".into(),
            text: String::new(),
            token_count: 1,
            nll: Some(rng.gen_range(0.1..9.0)),
        })
        .collect();
    let sets = extract_anomalies(&docs, 0.02, GroupBy::Source).unwrap();
    assert_eq!(sets.len(), 1);
    assert_eq!(sets[0].low.len(), 20);
    assert_eq!(sets[0].high.len(), 20);

    let mut by_nll: Vec<&Document> = docs.iter().collect();
    by_nll.sort_by(|a, b| a.nll.unwrap().total_cmp(&b.nll.unwrap()));
    let expected_low: Vec<&str> = by_nll[..20].iter().map(|d| d.id.as_str()).collect();
    let expected_high: Vec<&str> = by_nll[980..].iter().rev().map(|d| d.id.as_str()).collect();
    assert_eq!(sets[0].low, expected_low);
    assert_eq!(sets[0].high, expected_high);
    pass("anomaly_tails");
}

// Criterion 11: fold-4 up-sampling yields exactly n + 3 * n_low records;
// fold-1 is a permutation of the input.
#[test]
fn upsampling_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let corpus: Vec<AnnotatedDocument> = (0..1_000)
        .map(|i| {
            annotated(
                &format!("d{i:04}"),
                "web",
                rng.gen_range(1..=5),
                DomainType::Other,
                1,
                None,
            )
        })
        .collect();
    let n_low = corpus.iter().filter(|r| r.overall_score() < 3).count();
    let out = upsample_low(&corpus, &BalancePolicy::default(), 42).unwrap();
    assert_eq!(out.len(), corpus.len() + 3 * n_low);
    for r in &out {
        assert!(strip_replica(&r.doc.id).starts_with('d'));
    }

    let policy = BalancePolicy { fold: 1, ..Default::default() };
    let mut once = upsample_low(&corpus, &policy, 42).unwrap();
    once.sort_by(|a, b| a.doc.id.cmp(&b.doc.id));
    assert_eq!(once, corpus);
    pass("upsampling_arithmetic");
}

// Criterion 12: the full pipeline on a 50k-document corpus runs inside a
// minute and quality weighting raises the selected mean overall score.
#[test]
fn end_to_end_smoke() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let words = ["data", "model", "corpus", "sample", "token", "score"];
    let raws: Vec<RawDocument> = (0..50_000)
        .map(|i| {
            let len = rng.gen_range(5..40);
            let text: Vec<&str> = (0..len).map(|_| words[rng.gen_range(0..6)]).collect();
            RawDocument {
                id: format!("raw{i:05}"),
                source: ["web", "book"][i % 2].to_string(),
                text: text.join(" "),
            }
        })
        .collect();

    let tokenizer = WhitespacePunct;
    let docs: Vec<Document> = raws
        .iter()
        .flat_map(|raw| corpusman::corpus::chunk(raw, &tokenizer, 1024))
        .collect();
    assert_eq!(docs.len(), 50_000);

    let corpus: Vec<AnnotatedDocument> = docs
        .into_iter()
        .map(|doc| {
            let annotation = mock_rate(&doc);
            AnnotatedDocument { doc, annotation }
        })
        .collect();

    let joint = estimate_joint(&corpus).unwrap();
    let budget = (joint.total_tokens as f64 * 0.2) as u64;
    let spec = SampleSpec {
        strategy: Strategy::CriterionWeighted { criterion: Criterion::OverallScore },
        token_budget: budget,
        seed: 1234,
        stratify: Stratify::SourceAndDomain,
        shortfall: Shortfall::Redistribute,
        restrict_to_top_rated: false,
    };
    let manifest = sample(&corpus, &spec, &joint).unwrap();
    assert!(manifest.total_tokens >= budget);

    let report = analytics::rating_distribution(&corpus);
    assert!(report.by_source.contains_key("web"));
    assert!(report.by_source.contains_key("book"));

    let corpus_mean = corpus
        .iter()
        .map(|d| d.overall_score() as f64)
        .sum::<f64>()
        / corpus.len() as f64;
    let selected_mean = manifest
        .rows
        .iter()
        .map(|r| r.overall_score as f64)
        .sum::<f64>()
        / manifest.rows.len() as f64;
    assert!(
        selected_mean > corpus_mean,
        "selected mean {selected_mean:.3} vs corpus mean {corpus_mean:.3}"
    );
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "took {secs:.1}s");
    pass("end_to_end_smoke");
}
