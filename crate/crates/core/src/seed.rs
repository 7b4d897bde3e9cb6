//! Seed derivation shared by every stage.
//!
//! A per-image seed is the first 8 bytes (little endian) of
//! `SHA-256(global_seed.to_le_bytes() || b":" || label)`, so results never depend on
//! the order in which images are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(global: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(b":");
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn rng_for(global: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(global, label))
}
