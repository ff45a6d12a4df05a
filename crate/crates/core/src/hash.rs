//! Content hashing shared by the caches and the pipeline manifest.

use sha2::{Digest, Sha256};

/// SHA-256 over `parts`, each part length-prefixed so that
/// `["ab", "c"]` and `["a", "bc"]` hash differently.
pub fn digest_parts(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(sha256(bytes))
}
