//! Corpus ingestion and storage: JSONL shards in, fixed-token-budget
//! documents out, with streaming single-pass summaries.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{AnnotationRecord, Criterion, DomainType};
use crate::tokenizer::Tokenizer;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("duplicate annotation for id {0}")]
    DuplicateAnnotation(String),
    #[error("document {0} not found in index")]
    NotIndexed(String),
    #[error("empty corpus")]
    EmptyCorpus,
}

/// One input document before chunking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub source: String,
    pub text: String,
}

/// One fixed-token-budget text unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub source: String,
    pub text: String,
    pub token_count: u64,
    /// Mean per-token negative log-likelihood in nats, when a language model
    /// has scored the document.
    pub nll: Option<f64>,
}

/// A document paired with its annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    #[serde(flatten)]
    pub doc: Document,
    pub annotation: AnnotationRecord,
}

impl AnnotatedDocument {
    pub fn overall_score(&self) -> u8 {
        self.annotation.overall_score()
    }

    pub fn domain(&self) -> DomainType {
        self.annotation.domain
    }

    pub fn rating(&self, c: Criterion) -> Option<u8> {
        self.annotation.rating(c)
    }
}

/// Outcome tallies for a streaming ingest pass. Malformed lines are counted
/// and reported, never silently dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub read: u64,
    pub skipped: u64,
    /// (line number, diagnostic) for each skipped line.
    pub diagnostics: Vec<(u64, String)>,
}

#[derive(Deserialize)]
struct RawLine {
    id: Option<String>,
    text: String,
    source: Option<String>,
}

fn open_maybe_gzip(path: &Path) -> Result<Box<dyn Read>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(file)))
    } else {
        Ok(Box::new(file))
    }
}

/// Stream one JSONL shard as raw documents. Each line must be a JSON object
/// with at least a `text` field; ids are autogenerated from (source, line
/// number) when absent. Blank lines are ignored; malformed lines are tallied
/// in the returned summary with their line numbers.
pub fn ingest_jsonl(
    path: &Path,
    source: &str,
) -> Result<(Vec<RawDocument>, IngestSummary), CorpusError> {
    let reader = BufReader::new(open_maybe_gzip(path)?);
    let mut docs = Vec::new();
    let mut summary = IngestSummary::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawLine>(&line) {
            Ok(raw) => {
                summary.read += 1;
                docs.push(RawDocument {
                    id: raw.id.unwrap_or_else(|| format!("{source}:{line_no}")),
                    source: raw.source.unwrap_or_else(|| source.to_string()),
                    text: raw.text,
                });
            }
            Err(e) => {
                summary.skipped += 1;
                summary.diagnostics.push((line_no, e.to_string()));
            }
        }
    }
    Ok((docs, summary))
}

/// Split a raw document into chunks of at most `chunk_budget` tokens.
///
/// Chunk boundaries are made purely by token count; each chunk's text is the
/// original byte range from its first to its last token, so the
/// concatenation of chunk token sequences equals the raw token sequence.
/// Empty text yields an empty list.
pub fn chunk(raw: &RawDocument, tokenizer: &dyn Tokenizer, chunk_budget: usize) -> Vec<Document> {
    assert!(chunk_budget >= 1, "chunk_budget must be >= 1");
    let spans = tokenizer.spans(&raw.text);
    spans
        .chunks(chunk_budget)
        .enumerate()
        .map(|(i, group)| {
            let slice = &raw.text[group[0].start..group[group.len() - 1].end];
            Document {
                id: format!("{}#{}", raw.id, i),
                source: raw.source.clone(),
                text: slice.to_string(),
                token_count: group.len() as u64,
                nll: None,
            }
        })
        .collect()
}

/// Result of joining documents with annotations on id.
#[derive(Debug, Default)]
pub struct JoinReport {
    pub matched: Vec<AnnotatedDocument>,
    pub unmatched_docs: Vec<String>,
    pub unmatched_annotations: Vec<String>,
}

/// Inner join of documents and annotations on id. Duplicate annotations for
/// one id are fatal (ambiguous ground truth); unmatched rows on either side
/// are reported, not dropped.
pub fn attach_annotations(
    docs: impl IntoIterator<Item = Document>,
    annotations: impl IntoIterator<Item = AnnotationRecord>,
) -> Result<JoinReport, CorpusError> {
    let mut by_id: BTreeMap<String, AnnotationRecord> = BTreeMap::new();
    for ann in annotations {
        let id = ann.doc_id.clone();
        if by_id.insert(id.clone(), ann).is_some() {
            return Err(CorpusError::DuplicateAnnotation(id));
        }
    }
    let mut report = JoinReport::default();
    for doc in docs {
        match by_id.remove(&doc.id) {
            Some(annotation) => report.matched.push(AnnotatedDocument { doc, annotation }),
            None => report.unmatched_docs.push(doc.id),
        }
    }
    report.unmatched_annotations = by_id.into_keys().collect();
    Ok(report)
}

/// Document counts plus token mass for one table cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub docs: u64,
    pub tokens: u64,
}

impl Cell {
    fn add(&mut self, tokens: u64) {
        self.docs += 1;
        self.tokens += tokens;
    }

    fn merge(&mut self, other: &Cell) {
        self.docs += other.docs;
        self.tokens += other.tokens;
    }
}

/// Single-pass corpus aggregation: totals keyed by source, domain,
/// (source, domain), and overall-score level. A commutative monoid, so
/// shard-parallel reductions are order-independent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub total: Cell,
    pub by_source: BTreeMap<String, Cell>,
    pub by_domain: BTreeMap<String, Cell>,
    pub by_source_domain: BTreeMap<String, Cell>,
    pub by_overall_score: BTreeMap<u8, Cell>,
}

impl CorpusStats {
    pub fn observe(&mut self, doc: &AnnotatedDocument) {
        let tokens = doc.doc.token_count;
        self.total.add(tokens);
        self.by_source
            .entry(doc.doc.source.clone())
            .or_default()
            .add(tokens);
        self.by_domain
            .entry(doc.domain().name().to_string())
            .or_default()
            .add(tokens);
        self.by_source_domain
            .entry(format!("{}/{}", doc.doc.source, doc.domain().name()))
            .or_default()
            .add(tokens);
        self.by_overall_score
            .entry(doc.overall_score())
            .or_default()
            .add(tokens);
    }

    pub fn merge(&mut self, other: &CorpusStats) {
        self.total.merge(&other.total);
        for (k, v) in &other.by_source {
            self.by_source.entry(k.clone()).or_default().merge(v);
        }
        for (k, v) in &other.by_domain {
            self.by_domain.entry(k.clone()).or_default().merge(v);
        }
        for (k, v) in &other.by_source_domain {
            self.by_source_domain.entry(k.clone()).or_default().merge(v);
        }
        for (k, v) in &other.by_overall_score {
            self.by_overall_score.entry(*k).or_default().merge(v);
        }
    }

    /// Document-count proportion of one overall-score level.
    pub fn score_proportion(&self, level: u8) -> f64 {
        let cell = self.by_overall_score.get(&level).copied().unwrap_or_default();
        if self.total.docs == 0 {
            0.0
        } else {
            cell.docs as f64 / self.total.docs as f64
        }
    }

    /// CSV export of one table: key, docs, tokens, doc proportion, token
    /// proportion.
    pub fn table_csv<K: ToString>(&self, table: &BTreeMap<K, Cell>) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["key", "docs", "tokens", "doc_share", "token_share"])
            .unwrap();
        for (k, cell) in table {
            wtr.write_record([
                k.to_string(),
                cell.docs.to_string(),
                cell.tokens.to_string(),
                format!("{:.6}", cell.docs as f64 / self.total.docs.max(1) as f64),
                format!("{:.6}", cell.tokens as f64 / self.total.tokens.max(1) as f64),
            ])
            .unwrap();
        }
        String::from_utf8(wtr.into_inner().unwrap()).unwrap()
    }
}

/// Aggregate a stream of annotated documents.
pub fn corpus_summary<'a>(docs: impl IntoIterator<Item = &'a AnnotatedDocument>) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for doc in docs {
        stats.observe(doc);
    }
    stats
}

const INDEX_FILE: &str = "index.jsonl";

#[derive(Debug, Serialize, Deserialize)]
struct IndexRow {
    id: String,
    shard: u32,
    offset: u64,
}

/// Sharded JSONL document store with a sidecar index (id -> shard, byte
/// offset) for random access without a database.
pub struct DocStore {
    dir: PathBuf,
    index: BTreeMap<String, (u32, u64)>,
}

impl DocStore {
    fn shard_name(i: u32) -> String {
        format!("documents-{i:05}.jsonl")
    }

    /// Write documents into shards of `shard_size` documents each and build
    /// the sidecar index.
    pub fn write(
        dir: &Path,
        docs: impl IntoIterator<Item = Document>,
        shard_size: usize,
    ) -> Result<DocStore, CorpusError> {
        assert!(shard_size >= 1);
        fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CorpusError::Io { path, source }
        };

        let mut index = BTreeMap::new();
        let index_path = dir.join(INDEX_FILE);
        let mut index_out =
            BufWriter::new(File::create(&index_path).map_err(io_err(&index_path))?);

        let mut shard: u32 = 0;
        let mut in_shard = 0usize;
        let mut offset = 0u64;
        let mut out: Option<BufWriter<File>> = None;
        for doc in docs {
            if out.is_none() || in_shard == shard_size {
                if let Some(mut w) = out.take() {
                    w.flush().map_err(io_err(&index_path))?;
                    shard += 1;
                }
                let path = dir.join(Self::shard_name(shard));
                out = Some(BufWriter::new(File::create(&path).map_err(io_err(&path))?));
                in_shard = 0;
                offset = 0;
            }
            let w = out.as_mut().unwrap();
            let line = serde_json::to_string(&doc).expect("document serializes");
            index.insert(doc.id.clone(), (shard, offset));
            serde_json::to_writer(
                &mut index_out,
                &IndexRow {
                    id: doc.id,
                    shard,
                    offset,
                },
            )
            .map_err(|e| CorpusError::Io {
                path: index_path.clone(),
                source: e.into(),
            })?;
            index_out.write_all(b"\n").map_err(io_err(&index_path))?;
            w.write_all(line.as_bytes()).map_err(io_err(&index_path))?;
            w.write_all(b"\n").map_err(io_err(&index_path))?;
            offset += line.len() as u64 + 1;
            in_shard += 1;
        }
        if let Some(mut w) = out {
            w.flush().map_err(io_err(&index_path))?;
        }
        index_out.flush().map_err(io_err(&index_path))?;
        Ok(DocStore {
            dir: dir.to_path_buf(),
            index,
        })
    }

    pub fn open(dir: &Path) -> Result<DocStore, CorpusError> {
        let index_path = dir.join(INDEX_FILE);
        let reader = BufReader::new(File::open(&index_path).map_err(|source| CorpusError::Io {
            path: index_path.clone(),
            source,
        })?);
        let mut index = BTreeMap::new();
        for line in reader.lines() {
            let line = line.map_err(|source| CorpusError::Io {
                path: index_path.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let row: IndexRow = serde_json::from_str(&line).map_err(|e| CorpusError::Io {
                path: index_path.clone(),
                source: e.into(),
            })?;
            index.insert(row.id, (row.shard, row.offset));
        }
        Ok(DocStore {
            dir: dir.to_path_buf(),
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Random access by id via the sidecar index.
    pub fn get(&self, id: &str) -> Result<Document, CorpusError> {
        let &(shard, offset) = self
            .index
            .get(id)
            .ok_or_else(|| CorpusError::NotIndexed(id.to_string()))?;
        let path = self.dir.join(Self::shard_name(shard));
        let mut file = File::open(&path).map_err(|source| CorpusError::Io {
            path: path.clone(),
            source,
        })?;
        file.seek(SeekFrom::Start(offset))
            .map_err(|source| CorpusError::Io {
                path: path.clone(),
                source,
            })?;
        let mut line = String::new();
        BufReader::new(file)
            .read_line(&mut line)
            .map_err(|source| CorpusError::Io {
                path: path.clone(),
                source,
            })?;
        serde_json::from_str(&line).map_err(|e| CorpusError::Io {
            path,
            source: e.into(),
        })
    }

    /// Iterate all documents in shard order.
    pub fn iter(&self) -> Result<Vec<Document>, CorpusError> {
        let mut docs = Vec::with_capacity(self.index.len());
        let mut shard = 0u32;
        loop {
            let path = self.dir.join(Self::shard_name(shard));
            if !path.exists() {
                break;
            }
            let reader = BufReader::new(File::open(&path).map_err(|source| CorpusError::Io {
                path: path.clone(),
                source,
            })?);
            for line in reader.lines() {
                let line = line.map_err(|source| CorpusError::Io {
                    path: path.clone(),
                    source,
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                docs.push(serde_json::from_str(&line).map_err(|e| CorpusError::Io {
                    path: path.clone(),
                    source: e.into(),
                })?);
            }
            shard += 1;
        }
        Ok(docs)
    }
}

/// Write documents as a single JSONL file (the `documents.jsonl` interchange
/// schema).
pub fn write_documents_jsonl(path: &Path, docs: &[Document]) -> Result<(), CorpusError> {
    let mut out = BufWriter::new(File::create(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?);
    for doc in docs {
        serde_json::to_writer(&mut out, doc).map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        out.write_all(b"\n").map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    out.flush().map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Read a `documents.jsonl` file, tallying malformed lines like
/// [`ingest_jsonl`].
pub fn read_documents_jsonl(path: &Path) -> Result<(Vec<Document>, IngestSummary), CorpusError> {
    let reader = BufReader::new(open_maybe_gzip(path)?);
    let mut docs = Vec::new();
    let mut summary = IngestSummary::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Document>(&line) {
            Ok(doc) => {
                summary.read += 1;
                docs.push(doc);
            }
            Err(e) => {
                summary.skipped += 1;
                summary.diagnostics.push((i as u64 + 1, e.to_string()));
            }
        }
    }
    Ok((docs, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{DomainType, ALL_CRITERIA};
    use crate::tokenizer::WhitespacePunct;
    use std::io::Write as _;

    fn ann(id: &str, overall: u8, domain: DomainType) -> AnnotationRecord {
        AnnotationRecord {
            doc_id: id.to_string(),
            ratings: ALL_CRITERIA.iter().map(|&c| (c, overall)).collect(),
            domain,
        }
    }

    fn doc(id: &str, source: &str, tokens: u64) -> Document {
        Document {
            id: id.to_string(),
            source: source.to_string(),
            text: String::new(),
            token_count: tokens,
            nll: None,
        }
    }

    #[test]
    fn ingest_counts_lines() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{{\"text\": \"a\"}}").unwrap();
        writeln!(f, "{{\"text\": \"b\", \"id\": \"x\"}}").unwrap();
        writeln!(f, "{{\"text\": \"c\"}}").unwrap();
        let (docs, summary) = ingest_jsonl(f.path(), "C4").unwrap();
        assert_eq!(docs.len(), 3);
        assert_eq!(summary.read, 3);
        assert_eq!(summary.skipped, 0);
        assert_eq!(docs[0].id, "C4:1");
        assert_eq!(docs[1].id, "x");
        assert_eq!(docs[2].id, "C4:3");
    }

    #[test]
    fn ingest_empty_file() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let (docs, summary) = ingest_jsonl(f.path(), "C4").unwrap();
        assert!(docs.is_empty());
        assert_eq!(summary, IngestSummary::default());
    }

    #[test]
    fn ingest_tallies_malformed() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{{\"text\": \"a\"}}").unwrap();
        writeln!(f, "not json").unwrap();
        writeln!(f, "{{\"text\": \"b\"}}").unwrap();
        let (docs, summary) = ingest_jsonl(f.path(), "C4").unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(summary.skipped, 1);
        assert_eq!(summary.diagnostics[0].0, 2);
    }

    #[test]
    fn ingest_missing_file_is_fatal() {
        assert!(ingest_jsonl(Path::new("/nonexistent/x.jsonl"), "C4").is_err());
    }

    #[test]
    fn chunk_sizes() {
        let words: Vec<String> = (0..2500).map(|i| format!("w{i}")).collect();
        let raw = RawDocument {
            id: "r".into(),
            source: "C4".into(),
            text: words.join(" "),
        };
        let chunks = chunk(&raw, &WhitespacePunct, 1024);
        let sizes: Vec<u64> = chunks.iter().map(|c| c.token_count).collect();
        assert_eq!(sizes, vec![1024, 1024, 452]);
        assert_eq!(chunks[0].id, "r#0");
        assert_eq!(chunks[2].id, "r#2");
    }

    #[test]
    fn chunk_small_and_boundary() {
        let text100 = (0..100).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let raw = RawDocument {
            id: "r".into(),
            source: "C4".into(),
            text: text100,
        };
        let chunks = chunk(&raw, &WhitespacePunct, 1024);
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].token_count, 100);

        let text1024 = (0..1024).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let raw = RawDocument {
            id: "r".into(),
            source: "C4".into(),
            text: text1024,
        };
        assert_eq!(chunk(&raw, &WhitespacePunct, 1024).len(), 1);
    }

    #[test]
    fn chunk_empty_text() {
        let raw = RawDocument {
            id: "r".into(),
            source: "C4".into(),
            text: String::new(),
        };
        assert!(chunk(&raw, &WhitespacePunct, 1024).is_empty());
    }

    #[test]
    fn chunk_reassembly() {
        let tok = WhitespacePunct;
        let text = "one two, three; four five six seven... eight!";
        let raw = RawDocument {
            id: "r".into(),
            source: "C4".into(),
            text: text.to_string(),
        };
        for budget in 1..6 {
            let chunks = chunk(&raw, &tok, budget);
            let rejoined: Vec<String> = chunks
                .iter()
                .flat_map(|c| tok.tokens(&c.text).into_iter().map(String::from))
                .collect();
            assert_eq!(rejoined, tok.tokens(text));
        }
    }

    #[test]
    fn join_matches_and_reports() {
        let docs = vec![doc("a", "C4", 1), doc("b", "C4", 1), doc("c", "C4", 1)];
        let anns = vec![ann("a", 5, DomainType::Law), ann("b", 4, DomainType::Law)];
        let report = attach_annotations(docs, anns).unwrap();
        assert_eq!(report.matched.len(), 2);
        assert_eq!(report.unmatched_docs, vec!["c"]);
        assert!(report.unmatched_annotations.is_empty());
    }

    #[test]
    fn join_duplicate_annotation_is_fatal() {
        let docs = vec![doc("a", "C4", 1)];
        let anns = vec![ann("a", 5, DomainType::Law), ann("a", 4, DomainType::Law)];
        let err = attach_annotations(docs, anns).unwrap_err();
        assert!(err.to_string().contains('a'));
    }

    #[test]
    fn summary_single_document() {
        let docs = vec![AnnotatedDocument {
            doc: doc("a", "C4", 7),
            annotation: ann("a", 5, DomainType::Law),
        }];
        let stats = corpus_summary(&docs);
        assert_eq!(stats.total, Cell { docs: 1, tokens: 7 });
        assert_eq!(stats.score_proportion(5), 1.0);
        assert_eq!(stats.by_source["C4"], Cell { docs: 1, tokens: 7 });
    }

    #[test]
    fn summary_marginals_match_joint() {
        let mut docs = Vec::new();
        for i in 0..50 {
            let source = ["C4", "Book"][i % 2];
            let domain = [DomainType::Law, DomainType::Other, DomainType::Coding][i % 3];
            docs.push(AnnotatedDocument {
                doc: doc(&format!("d{i}"), source, (i as u64 % 5) + 1),
                annotation: ann(&format!("d{i}"), (i as u8 % 5) + 1, domain),
            });
        }
        let stats = corpus_summary(&docs);
        let joint_tokens: u64 = stats.by_source_domain.values().map(|c| c.tokens).sum();
        assert_eq!(joint_tokens, stats.total.tokens);
        for (source, cell) in &stats.by_source {
            let sum: u64 = stats
                .by_source_domain
                .iter()
                .filter(|(k, _)| k.starts_with(&format!("{source}/")))
                .map(|(_, c)| c.tokens)
                .sum();
            assert_eq!(sum, cell.tokens);
        }
        // Streaming equivalence: order does not matter.
        let mut shuffled = docs.clone();
        shuffled.reverse();
        shuffled.swap(0, 25);
        assert_eq!(corpus_summary(&shuffled), stats);
    }

    #[test]
    fn store_round_trip_and_random_access() {
        let dir = tempfile::tempdir().unwrap();
        let docs: Vec<Document> = (0..10)
            .map(|i| Document {
                id: format!("d{i}"),
                source: "C4".into(),
                text: format!("text {i}"),
                token_count: 2,
                nll: if i % 2 == 0 { Some(i as f64) } else { None },
            })
            .collect();
        DocStore::write(dir.path(), docs.clone(), 3).unwrap();
        let store = DocStore::open(dir.path()).unwrap();
        assert_eq!(store.len(), 10);
        assert_eq!(store.get("d7").unwrap(), docs[7]);
        assert_eq!(store.iter().unwrap(), docs);
        assert!(store.get("missing").is_err());
    }
}
