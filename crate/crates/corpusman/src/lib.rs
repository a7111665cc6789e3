//! Corpus management toolkit for pre-training data curation.
//!
//! The pipeline annotates fixed-token-budget text documents with 14 quality
//! ratings and 15 domain types, selects token-budgeted training subsets by
//! quality-weighted stratified sampling without replacement, and provides the
//! evaluation instruments (NDCG and its error bound, correlations, agreement,
//! accuracy reports) used to study rating quality.

pub mod analytics;
pub mod anomaly;
pub mod corpus;
pub mod curate;
pub mod prf;
pub mod rater;
pub mod sampler;
pub mod schema;
pub mod tokenizer;
