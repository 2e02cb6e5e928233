//! Deterministic RNG substreams derived from one root seed.
//!
//! Every randomized choice (init, data order, mask draws) pulls a fresh
//! generator keyed by a purpose string plus up to two indices, so adding a
//! new consumer never perturbs existing streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the purpose label; cheap, stable, collision-safe at our scale.
fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Generator for (root, purpose, a, b); pass 0 for unused indices.
pub fn substream(root: u64, purpose: &str, a: u64, b: u64) -> ChaCha8Rng {
    let words = [root, fnv1a(purpose), a, b];
    let mut seed = [0u8; 32];
    for (i, w) in words.iter().enumerate() {
        seed[i * 8..(i + 1) * 8].copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
