//! Stable seed derivation.

use sha2::{Digest, Sha256};

/// First eight bytes (big-endian) of SHA-256 over the length-prefixed parts.
pub fn stable_seed(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_be_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
