//! Deterministic random streams.
//!
//! Every random decision in the pipeline draws from a named sub-stream of the
//! single user-facing `--seed`. Streams are independent ChaCha20 generators
//! keyed by `sha256(seed_le || name)`, so adding a new consumer never shifts
//! the draws of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Derive the generator for a named sub-stream of `seed`.
pub fn stream(seed: u64, name: &str) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(key)
}

/// Collapse a named sub-stream to a plain `u64` seed, for components that
/// take a seed rather than a generator.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    use rand::Rng;
    stream(seed, name).gen()
}
