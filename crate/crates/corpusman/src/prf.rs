//! Keyed pseudorandom function used for selection keys.
//!
//! Selection must be order-independent and reproducible across worker counts,
//! so per-document randomness is a pure function of (seed, context, doc_id)
//! rather than a draw from a shared RNG stream.

use sha2::{Digest, Sha256};

/// Identifier recorded in manifests so a reader knows how keys were derived.
pub const PRF_ID: &str = "sha256-u64";

/// Uniform draw in the open interval (0, 1), keyed by seed and domain context.
pub fn uniform(seed: u64, context: &str, doc_id: &str) -> f64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([context.len() as u8]);
    hasher.update(context.as_bytes());
    hasher.update(doc_id.as_bytes());
    let digest = hasher.finalize();
    let x = u64::from_le_bytes(digest[..8].try_into().unwrap());
    // Map to (0,1): the +0.5 offset keeps both endpoints open.
    (x as f64 + 0.5) / (u64::MAX as f64 + 1.0)
}

/// Standard Gumbel draw derived from the PRF.
pub fn gumbel(seed: u64, context: &str, doc_id: &str) -> f64 {
    let u = uniform(seed, context, doc_id);
    -(-u.ln()).ln()
}

/// Exponentiated-uniform key for weighted sampling without replacement:
/// taking documents in descending `u^(1/w)` order reproduces sequential
/// weighted draws without replacement.
pub fn weighted_key(seed: u64, context: &str, doc_id: &str, weight: f64) -> f64 {
    debug_assert!(weight > 0.0);
    uniform(seed, context, doc_id).powf(1.0 / weight)
}
