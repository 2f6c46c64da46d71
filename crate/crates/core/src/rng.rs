//! Deterministic randomness. Every stream is keyed by the run seed, a
//! domain string and a few integers, so results never depend on call order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a 64-bit seed from a root seed, a domain tag and extra words.
pub fn derive_seed(root: u64, domain: &str, parts: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update((domain.len() as u64).to_le_bytes());
    hasher.update(domain.as_bytes());
    for part in parts {
        hasher.update(part.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}

/// Stable 64-bit digest of a string.
pub fn hash_str(text: &str) -> u64 {
    derive_seed(0, text, &[])
}

pub fn stream(root: u64, domain: &str, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, domain, parts))
}

/// A single uniform draw in `[0, 1)`.
pub fn unit(root: u64, domain: &str, parts: &[u64]) -> f64 {
    stream(root, domain, parts).random::<f64>()
}
