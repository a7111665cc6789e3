//! The 14 quality criteria, 15 domain types, rating records, and the prompt
//! templates used to obtain and parse rater output.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of rating levels per quality criterion.
pub const RATING_LEVELS: u8 = 5;

/// The quality criteria, in prompt order. The 1-based prompt index of each
/// member is `index()`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Accuracy,
    Coherence,
    LanguageConsistency,
    SemanticDensity,
    KnowledgeNovelty,
    TopicFocus,
    Creativity,
    Professionalism,
    StyleConsistency,
    GrammaticalDiversity,
    StructuralStandardization,
    Originality,
    Sensitivity,
    OverallScore,
}

pub const ALL_CRITERIA: [Criterion; 14] = [
    Criterion::Accuracy,
    Criterion::Coherence,
    Criterion::LanguageConsistency,
    Criterion::SemanticDensity,
    Criterion::KnowledgeNovelty,
    Criterion::TopicFocus,
    Criterion::Creativity,
    Criterion::Professionalism,
    Criterion::StyleConsistency,
    Criterion::GrammaticalDiversity,
    Criterion::StructuralStandardization,
    Criterion::Originality,
    Criterion::Sensitivity,
    Criterion::OverallScore,
];

impl Criterion {
    /// 1-based index in the prompt template.
    pub fn index(self) -> usize {
        ALL_CRITERIA.iter().position(|&c| c == self).unwrap() + 1
    }

    /// snake_case key used in flat rater output and JSONL schemas.
    pub fn key(self) -> &'static str {
        match self {
            Criterion::Accuracy => "accuracy",
            Criterion::Coherence => "coherence",
            Criterion::LanguageConsistency => "language_consistency",
            Criterion::SemanticDensity => "semantic_density",
            Criterion::KnowledgeNovelty => "knowledge_novelty",
            Criterion::TopicFocus => "topic_focus",
            Criterion::Creativity => "creativity",
            Criterion::Professionalism => "professionalism",
            Criterion::StyleConsistency => "style_consistency",
            Criterion::GrammaticalDiversity => "grammatical_diversity",
            Criterion::StructuralStandardization => "structural_standardization",
            Criterion::Originality => "originality",
            Criterion::Sensitivity => "sensitivity",
            Criterion::OverallScore => "overall_score",
        }
    }

    /// Display name as it appears in the bracketed prompt template.
    pub fn display_name(self) -> &'static str {
        match self {
            Criterion::Accuracy => "Accuracy",
            Criterion::Coherence => "Coherence",
            Criterion::LanguageConsistency => "Language Consistency",
            Criterion::SemanticDensity => "Semantic Density",
            Criterion::KnowledgeNovelty => "Knowledge Novelty",
            Criterion::TopicFocus => "Topic Focus",
            Criterion::Creativity => "Creativity",
            Criterion::Professionalism => "Professionalism",
            Criterion::StyleConsistency => "Style Consistency",
            Criterion::GrammaticalDiversity => "Grammatical Diversity",
            Criterion::StructuralStandardization => "Structural Standardization",
            Criterion::Originality => "Originality",
            Criterion::Sensitivity => "Sensitivity",
            Criterion::OverallScore => "Overall Score",
        }
    }

    pub fn from_key(key: &str) -> Option<Criterion> {
        ALL_CRITERIA.iter().copied().find(|c| c.key() == key)
    }

    pub fn from_index(index: usize) -> Option<Criterion> {
        ALL_CRITERIA.get(index.checked_sub(1)?).copied()
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// The application domain types, letter-coded A through O in the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DomainType {
    Medicine,
    Finance,
    Law,
    Education,
    Technology,
    Entertainment,
    Mathematics,
    Coding,
    Government,
    Culture,
    Transportation,
    RetailEcommerce,
    Telecommunication,
    Agriculture,
    Other,
}

pub const ALL_DOMAINS: [DomainType; 15] = [
    DomainType::Medicine,
    DomainType::Finance,
    DomainType::Law,
    DomainType::Education,
    DomainType::Technology,
    DomainType::Entertainment,
    DomainType::Mathematics,
    DomainType::Coding,
    DomainType::Government,
    DomainType::Culture,
    DomainType::Transportation,
    DomainType::RetailEcommerce,
    DomainType::Telecommunication,
    DomainType::Agriculture,
    DomainType::Other,
];

impl DomainType {
    pub fn letter(self) -> char {
        let i = ALL_DOMAINS.iter().position(|&d| d == self).unwrap();
        (b'A' + i as u8) as char
    }

    pub fn name(self) -> &'static str {
        match self {
            DomainType::Medicine => "Medicine",
            DomainType::Finance => "Finance",
            DomainType::Law => "Law",
            DomainType::Education => "Education",
            DomainType::Technology => "Technology",
            DomainType::Entertainment => "Entertainment",
            DomainType::Mathematics => "Mathematics",
            DomainType::Coding => "Coding",
            DomainType::Government => "Government",
            DomainType::Culture => "Culture",
            DomainType::Transportation => "Transportation",
            DomainType::RetailEcommerce => "Retail E-commerce",
            DomainType::Telecommunication => "Telecommunication",
            DomainType::Agriculture => "Agriculture",
            DomainType::Other => "Other",
        }
    }

    pub fn from_letter(letter: char) -> Option<DomainType> {
        let i = (letter.to_ascii_uppercase() as u8).checked_sub(b'A')? as usize;
        ALL_DOMAINS.get(i).copied()
    }

    /// Case-insensitive name lookup. Accepts both "Retail E-commerce" and
    /// "retail e-commerce" style spellings.
    pub fn from_name(name: &str) -> Option<DomainType> {
        let norm = name.trim().to_ascii_lowercase();
        ALL_DOMAINS
            .iter()
            .copied()
            .find(|d| d.name().to_ascii_lowercase() == norm)
    }

    /// Letter, name, or case-insensitive name.
    pub fn parse(s: &str) -> Option<DomainType> {
        let t = s.trim();
        let mut chars = t.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            return DomainType::from_letter(c);
        }
        DomainType::from_name(t)
    }
}

impl fmt::Display for DomainType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A complete annotation for one document: all 14 quality ratings plus a
/// domain type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub doc_id: String,
    /// One level in 1..=5 per criterion; a BTreeMap keeps serialization order
    /// stable.
    pub ratings: BTreeMap<Criterion, u8>,
    pub domain: DomainType,
}

impl AnnotationRecord {
    pub fn rating(&self, c: Criterion) -> Option<u8> {
        self.ratings.get(&c).copied()
    }

    pub fn overall_score(&self) -> u8 {
        self.ratings
            .get(&Criterion::OverallScore)
            .copied()
            .unwrap_or(0)
    }
}

/// Which prompt template to render for the rater.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Full,
    AllRating,
    ScoreOnly,
    DomainOnly,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::Full => "full",
            PromptMode::AllRating => "all_rating",
            PromptMode::ScoreOnly => "score_only",
            PromptMode::DomainOnly => "domain_only",
        }
    }
}

// Golden templates. The files under prompts/ are the committed source of
// truth; rendering is a single placeholder substitution over them.
pub const FULL_TEMPLATE: &str = include_str!("../prompts/full.txt");
pub const ALL_RATING_TEMPLATE: &str = include_str!("../prompts/all_rating.txt");
pub const SCORE_ONLY_TEMPLATE: &str = include_str!("../prompts/score_only.txt");
pub const DOMAIN_ONLY_TEMPLATE: &str = include_str!("../prompts/domain_only.txt");
/// System prompt used alongside the full template. Never emitted in chat
/// modes.
pub const SYSTEM_PROMPT: &str = include_str!("../prompts/system.txt");

pub fn template(mode: PromptMode) -> &'static str {
    match mode {
        PromptMode::Full => FULL_TEMPLATE,
        PromptMode::AllRating => ALL_RATING_TEMPLATE,
        PromptMode::ScoreOnly => SCORE_ONLY_TEMPLATE,
        PromptMode::DomainOnly => DOMAIN_ONLY_TEMPLATE,
    }
}

/// Substitute `{text}` into the template for `mode`. All other bytes are
/// identical to the committed template file.
pub fn render_prompt(mode: PromptMode, text: &str) -> String {
    template(mode).replacen("{text}", text, 1)
}

/// Render a record in the flat key-value emission form:
/// `accuracy: 5 coherence: 4 ... overall_score: 4 domain: culture`.
/// Criterion order matches the [1]..[14] prompt order.
pub fn render_annotation(record: &AnnotationRecord) -> String {
    let mut out = String::new();
    for c in ALL_CRITERIA {
        out.push_str(c.key());
        out.push_str(": ");
        out.push_str(&record.rating(c).unwrap_or(0).to_string());
        out.push(' ');
    }
    out.push_str("domain: ");
    out.push_str(&record.domain.name().to_ascii_lowercase());
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("missing criterion: {0}")]
    MissingCriterion(Criterion),
    #[error("missing domain")]
    MissingDomain,
    #[error("level out of range: {criterion}={level}")]
    LevelOutOfRange { criterion: Criterion, level: i64 },
    #[error("unknown domain: {0}")]
    UnknownDomain(String),
    #[error("duplicate field: {0}")]
    DuplicateField(String),
    #[error("unparseable rating for {criterion}: {value:?}")]
    BadRating { criterion: Criterion, value: String },
}

/// Parse rater output in either the bracketed template dialect
/// (`[1]Accuracy:4/5 ... Domain:J`) or the flat key-value dialect
/// (`accuracy: 4 ... domain: culture`) into a validated record.
///
/// The parser is total: every failure is a structured [`ParseError`] naming
/// the first offending field.
pub fn parse_all_rating(output: &str, doc_id: &str) -> Result<AnnotationRecord, ParseError> {
    let mut ratings: BTreeMap<Criterion, u8> = BTreeMap::new();
    let mut domain: Option<DomainType> = None;

    fn set_rating(
        ratings: &mut BTreeMap<Criterion, u8>,
        criterion: Criterion,
        raw: &str,
    ) -> Result<(), ParseError> {
        let cleaned = raw.trim().trim_end_matches("/5").trim();
        let level: i64 = cleaned.parse().map_err(|_| ParseError::BadRating {
            criterion,
            value: raw.trim().to_string(),
        })?;
        if !(1..=RATING_LEVELS as i64).contains(&level) {
            return Err(ParseError::LevelOutOfRange { criterion, level });
        }
        if ratings.insert(criterion, level as u8).is_some() {
            return Err(ParseError::DuplicateField(criterion.key().to_string()));
        }
        Ok(())
    }

    // Bracketed dialect: "[i]Name:level/5" fragments anywhere in the output.
    let mut rest = output;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let Some(close) = after.find(']') else { break };
        let idx: Option<usize> = after[..close].trim().parse().ok();
        let tail = &after[close + 1..];
        if let Some(criterion) = idx.and_then(Criterion::from_index) {
            if let Some(stripped) = strip_label(tail, criterion.display_name()) {
                let value = leading_value(stripped);
                if !value.is_empty() {
                    set_rating(&mut ratings, criterion, value)?;
                }
            }
        }
        rest = tail;
    }

    // Flat dialect: "key: value" pairs, including "domain: culture".
    // Also picks up "Domain:J" from the bracketed dialect.
    for c in ALL_CRITERIA {
        if ratings.contains_key(&c) {
            continue;
        }
        let mut offset = 0usize;
        let mut seen = false;
        while let Some(pos) = find_key(&output[offset..], c.key()) {
            let value_start = offset + pos + c.key().len();
            let after_key = output[value_start..].trim_start_matches([':', ' ', '\t']);
            let value = leading_value(after_key);
            if !value.is_empty() {
                if seen {
                    return Err(ParseError::DuplicateField(c.key().to_string()));
                }
                set_rating(&mut ratings, c, value)?;
                seen = true;
            }
            offset = value_start;
        }
    }

    for (pos, _) in output.to_ascii_lowercase().match_indices("domain") {
        // Skip "Domain Types:" headers and snake_case keys like "domain_foo".
        let after = &output[pos + "domain".len()..];
        let after = after.strip_prefix(" type").unwrap_or(after);
        let Some(after) = after.trim_start().strip_prefix(':') else {
            continue;
        };
        let value = leading_domain_value(after.trim_start());
        if value.is_empty() || value == "_" {
            continue;
        }
        let parsed =
            DomainType::parse(value).ok_or_else(|| ParseError::UnknownDomain(value.to_string()))?;
        if let Some(prev) = domain {
            if prev != parsed {
                return Err(ParseError::DuplicateField("domain".to_string()));
            }
        }
        domain = Some(parsed);
    }

    for c in ALL_CRITERIA {
        if !ratings.contains_key(&c) {
            return Err(ParseError::MissingCriterion(c));
        }
    }
    let domain = domain.ok_or(ParseError::MissingDomain)?;

    Ok(AnnotationRecord {
        doc_id: doc_id.to_string(),
        ratings,
        domain,
    })
}

/// Parse a score-only rater output: the first integer in the text.
pub fn parse_score_only(output: &str, doc_id: &str) -> Result<AnnotationRecord, ParseError> {
    let digits: String = output
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    let mut ratings = BTreeMap::new();
    let level: i64 = digits.parse().map_err(|_| ParseError::BadRating {
        criterion: Criterion::OverallScore,
        value: output.trim().to_string(),
    })?;
    if !(1..=RATING_LEVELS as i64).contains(&level) {
        return Err(ParseError::LevelOutOfRange {
            criterion: Criterion::OverallScore,
            level,
        });
    }
    ratings.insert(Criterion::OverallScore, level as u8);
    Ok(AnnotationRecord {
        doc_id: doc_id.to_string(),
        ratings,
        domain: DomainType::Other,
    })
}

fn strip_label<'a>(s: &'a str, label: &str) -> Option<&'a str> {
    let s = s.trim_start();
    if s.len() >= label.len() && s[..label.len()].eq_ignore_ascii_case(label) {
        Some(s[label.len()..].trim_start().trim_start_matches(':'))
    } else {
        None
    }
}

fn find_key(haystack: &str, key: &str) -> Option<usize> {
    let lower = haystack.to_ascii_lowercase();
    let mut from = 0;
    while let Some(pos) = lower[from..].find(key) {
        let abs = from + pos;
        let before_ok = abs == 0
            || !lower.as_bytes()[abs - 1].is_ascii_alphanumeric()
                && lower.as_bytes()[abs - 1] != b'_';
        let after = abs + key.len();
        let after_ok = after >= lower.len()
            || !lower.as_bytes()[after].is_ascii_alphanumeric() && lower.as_bytes()[after] != b'_';
        if before_ok && after_ok {
            return Some(abs);
        }
        from = abs + key.len();
    }
    None
}

fn leading_value(s: &str) -> &str {
    let s = s.trim_start();
    let end = s
        .find(|c: char| c.is_whitespace() || c == '[' || c == ',')
        .unwrap_or(s.len());
    s[..end].trim_end_matches(['.', ';'])
}

fn leading_domain_value(s: &str) -> &str {
    // Domain names may contain spaces and hyphens ("retail e-commerce").
    let end = s
        .find(|c: char| c == '\n' || c == '[' || c == ',')
        .unwrap_or(s.len());
    s[..end].trim()
}

/// A single invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingCriterion(Criterion),
    LevelOutOfRange { criterion: Criterion, level: u8 },
    EmptyDocId,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingCriterion(c) => write!(f, "missing criterion: {c}"),
            Violation::LevelOutOfRange { criterion, level } => {
                write!(f, "level out of range: {criterion}={level}")
            }
            Violation::EmptyDocId => write!(f, "empty doc id"),
        }
    }
}

/// Check every record invariant, returning all violations rather than the
/// first.
pub fn validate(record: &AnnotationRecord) -> Vec<Violation> {
    let mut violations = Vec::new();
    if record.doc_id.is_empty() {
        violations.push(Violation::EmptyDocId);
    }
    for c in ALL_CRITERIA {
        match record.rating(c) {
            None => violations.push(Violation::MissingCriterion(c)),
            Some(level) if !(1..=RATING_LEVELS).contains(&level) => {
                violations.push(Violation::LevelOutOfRange {
                    criterion: c,
                    level,
                })
            }
            Some(_) => {}
        }
    }
    violations
}
