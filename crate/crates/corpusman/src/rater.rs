//! Obtaining annotations: a remote HTTP rater with bounded concurrency and
//! retries, a deterministic offline mock, and annotation file import.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{CorpusError, Document, IngestSummary};
use crate::schema::{
    parse_all_rating, parse_score_only, render_prompt, validate, AnnotationRecord, DomainType,
    PromptMode, ALL_CRITERIA, ALL_DOMAINS,
};

#[derive(Debug, Clone)]
pub struct RaterEndpoint {
    pub base_url: String,
    pub mode: PromptMode,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub timeout: Duration,
    /// Forwarded to the remote model; enforcement is the server's job.
    pub temperature: f64,
}

impl RaterEndpoint {
    pub fn new(base_url: impl Into<String>, mode: PromptMode) -> RaterEndpoint {
        RaterEndpoint {
            base_url: base_url.into(),
            mode,
            max_in_flight: 4,
            max_retries: 3,
            timeout: Duration::from_secs(60),
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Transport,
    Parse,
    Validation,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub attempts: u32,
    pub detail: String,
}

/// Exactly one of `record` / `failure` per document.
#[derive(Debug, Clone, Serialize)]
pub struct AnnotationOutcome {
    pub doc_id: String,
    pub record: Option<AnnotationRecord>,
    pub failure: Option<Failure>,
}

impl AnnotationOutcome {
    fn ok(doc_id: String, record: AnnotationRecord) -> Self {
        AnnotationOutcome {
            doc_id,
            record: Some(record),
            failure: None,
        }
    }

    fn failed(doc_id: String, kind: FailureKind, attempts: u32, detail: String) -> Self {
        AnnotationOutcome {
            doc_id,
            record: None,
            failure: Some(Failure {
                kind,
                attempts,
                detail,
            }),
        }
    }
}

/// One rating transaction failure; `retryable` distinguishes transient
/// transport trouble from terminal answers.
#[derive(Debug)]
pub struct RateFailure {
    pub retryable: bool,
    pub detail: String,
}

/// A rating backend: given a rendered prompt, return the raw model output.
pub trait Rater: Sync {
    fn rate(&self, doc_id: &str, mode: PromptMode, prompt: &str) -> Result<String, RateFailure>;
}

#[derive(Serialize)]
struct RateRequest<'a> {
    id: &'a str,
    mode: &'a str,
    prompt: &'a str,
    temperature: f64,
}

#[derive(Deserialize)]
struct RateResponse {
    #[allow(dead_code)]
    id: String,
    output: String,
}

/// Environment variables naming the API key header and value. The value is
/// attached to requests and never logged.
pub const API_KEY_HEADER_ENV: &str = "CORPUSMAN_API_KEY_HEADER";
pub const API_KEY_ENV: &str = "CORPUSMAN_API_KEY";

/// HTTP backend: POST {base_url}/v1/rate. Status 429 and 5xx are retryable;
/// other non-success statuses are terminal.
pub struct HttpRater {
    client: reqwest::blocking::Client,
    endpoint: RaterEndpoint,
    api_key: Option<(String, String)>,
}

impl HttpRater {
    pub fn new(endpoint: RaterEndpoint) -> Result<HttpRater, reqwest::Error> {
        let client = reqwest::blocking::Client::builder()
            .timeout(endpoint.timeout)
            .build()?;
        let api_key = match (
            std::env::var(API_KEY_HEADER_ENV),
            std::env::var(API_KEY_ENV),
        ) {
            (Ok(header), Ok(value)) => Some((header, value)),
            _ => None,
        };
        Ok(HttpRater {
            client,
            endpoint,
            api_key,
        })
    }
}

impl Rater for HttpRater {
    fn rate(&self, doc_id: &str, mode: PromptMode, prompt: &str) -> Result<String, RateFailure> {
        let url = format!("{}/v1/rate", self.endpoint.base_url.trim_end_matches('/'));
        let mut req = self.client.post(&url).json(&RateRequest {
            id: doc_id,
            mode: mode.as_str(),
            prompt,
            temperature: self.endpoint.temperature,
        });
        if let Some((header, value)) = &self.api_key {
            req = req.header(header.as_str(), value.as_str());
        }
        let resp = req.send().map_err(|e| RateFailure {
            retryable: true,
            detail: e.to_string(),
        })?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(RateFailure {
                retryable: true,
                detail: format!("status {status}"),
            });
        }
        if !status.is_success() {
            return Err(RateFailure {
                retryable: false,
                detail: format!("status {status}"),
            });
        }
        let body: RateResponse = resp.json().map_err(|e| RateFailure {
            retryable: false,
            detail: format!("bad response body: {e}"),
        })?;
        Ok(body.output)
    }
}

fn parse_output(mode: PromptMode, output: &str, doc_id: &str) -> Result<AnnotationRecord, String> {
    let record = match mode {
        PromptMode::Full | PromptMode::AllRating => {
            parse_all_rating(output, doc_id).map_err(|e| e.to_string())?
        }
        PromptMode::ScoreOnly => parse_score_only(output, doc_id).map_err(|e| e.to_string())?,
        PromptMode::DomainOnly => {
            let domain = DomainType::parse(output.trim())
                .ok_or_else(|| format!("unknown domain: {:?}", output.trim()))?;
            AnnotationRecord {
                doc_id: doc_id.to_string(),
                ratings: BTreeMap::new(),
                domain,
            }
        }
    };
    Ok(record)
}

fn rate_one(
    doc: &Document,
    rater: &dyn Rater,
    mode: PromptMode,
    max_retries: u32,
    backoff_base: Duration,
) -> AnnotationOutcome {
    let prompt = render_prompt(mode, &doc.text);
    let mut attempts = 0u32;
    loop {
        attempts += 1;
        match rater.rate(&doc.id, mode, &prompt) {
            Ok(output) => {
                return match parse_output(mode, &output, &doc.id) {
                    Ok(record) => {
                        // Narrow modes legitimately omit most criteria; only
                        // the full record shape is validated strictly.
                        if matches!(mode, PromptMode::Full | PromptMode::AllRating) {
                            let violations = validate(&record);
                            if !violations.is_empty() {
                                let detail = violations
                                    .iter()
                                    .map(ToString::to_string)
                                    .collect::<Vec<_>>()
                                    .join("; ");
                                return AnnotationOutcome::failed(
                                    doc.id.clone(),
                                    FailureKind::Validation,
                                    attempts,
                                    detail,
                                );
                            }
                        }
                        AnnotationOutcome::ok(doc.id.clone(), record)
                    }
                    Err(detail) => AnnotationOutcome::failed(
                        doc.id.clone(),
                        FailureKind::Parse,
                        attempts,
                        detail,
                    ),
                };
            }
            Err(failure) => {
                if !failure.retryable || attempts > max_retries {
                    return AnnotationOutcome::failed(
                        doc.id.clone(),
                        FailureKind::Transport,
                        attempts,
                        failure.detail,
                    );
                }
                // Exponential backoff: base * 2^(attempt-1).
                std::thread::sleep(backoff_base * (1 << (attempts - 1).min(16)));
            }
        }
    }
}

/// Rate every document with at most `max_in_flight` concurrent requests.
/// Returns one outcome per input, in completion order; no document is ever
/// dropped.
pub fn rate_batch(docs: &[Document], rater: &dyn Rater, endpoint: &RaterEndpoint) -> Vec<AnnotationOutcome> {
    rate_batch_with_backoff(docs, rater, endpoint, Duration::from_millis(250))
}

pub fn rate_batch_with_backoff(
    docs: &[Document],
    rater: &dyn Rater,
    endpoint: &RaterEndpoint,
    backoff_base: Duration,
) -> Vec<AnnotationOutcome> {
    let next = AtomicUsize::new(0);
    let outcomes: Mutex<Vec<AnnotationOutcome>> = Mutex::new(Vec::with_capacity(docs.len()));
    let workers = endpoint.max_in_flight.max(1).min(docs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= docs.len() {
                    break;
                }
                let outcome = rate_one(
                    &docs[i],
                    rater,
                    endpoint.mode,
                    endpoint.max_retries,
                    backoff_base,
                );
                outcomes.lock().unwrap().push(outcome);
            });
        }
    });
    outcomes.into_inner().unwrap()
}

/// Deterministic offline rater: a pure function of (id, source, text
/// length). Useful for end-to-end pipeline runs without a model.
pub fn mock_rate(doc: &Document) -> AnnotationRecord {
    let mut hasher = Sha256::new();
    hasher.update(doc.id.as_bytes());
    hasher.update([0]);
    hasher.update(doc.source.as_bytes());
    hasher.update([0]);
    hasher.update((doc.text.len() as u64).to_le_bytes());
    let digest = hasher.finalize();
    let ratings = ALL_CRITERIA
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, digest[i] % 5 + 1))
        .collect();
    let domain = ALL_DOMAINS[(digest[20] % 15) as usize];
    AnnotationRecord {
        doc_id: doc.id.clone(),
        ratings,
        domain,
    }
}

/// Read an annotations.jsonl file; invalid lines (bad JSON or failed record
/// validation) are counted and reported, valid records returned.
pub fn import_annotations(
    path: &Path,
) -> Result<(Vec<AnnotationRecord>, IngestSummary), CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::new();
    let mut summary = IngestSummary::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<AnnotationRecord>(&line) {
            Ok(record) => {
                let violations = validate(&record);
                if violations.is_empty() {
                    summary.read += 1;
                    records.push(record);
                } else {
                    summary.skipped += 1;
                    summary
                        .diagnostics
                        .push((line_no, violations[0].to_string()));
                }
            }
            Err(e) => {
                summary.skipped += 1;
                summary.diagnostics.push((line_no, e.to_string()));
            }
        }
    }
    Ok((records, summary))
}
