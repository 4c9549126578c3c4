//! Content fingerprints for persisted artifacts.
//!
//! Model and generator files embed a hash of the preprocessing provenance
//! they were trained against, so stale artifacts are rejected instead of
//! silently scoring mismatched inputs.

use sha2::{Digest, Sha256};

/// Hex SHA-256 of raw bytes.
pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex(&hasher.finalize())
}

/// Hex SHA-256 over a sequence of f64 values in their little-endian bit
/// representation. NaN-free inputs are expected; the caller owns that.
pub fn fingerprint_f64s(values: impl IntoIterator<Item = f64>) -> String {
    let mut hasher = Sha256::new();
    for v in values {
        hasher.update(v.to_le_bytes());
    }
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
