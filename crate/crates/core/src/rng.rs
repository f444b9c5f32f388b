//! Deterministic seed derivation.
//!
//! Every random decision in a run draws from a stream derived from the master
//! seed plus a descriptive label and optional indices. Unrelated subsystems
//! therefore never share RNG state, and identical (config, seed) pairs
//! reproduce runs bit-for-bit. Streams in use include "distance",
//! "partition", "foundation-init", "dqn-init", "resident-train",
//! "local-train", "explore", "dqn-sample", "experiment", and the synthetic
//! dataset streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a child seed from `master`, a stream `label`, and integer indices.
pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update([0u8]);
    h.update(label.as_bytes());
    for ix in indices {
        h.update([0u8]);
        h.update(ix.to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest holds 8 bytes"))
}

/// RNG for the stream identified by (`master`, `label`, `indices`).
pub fn stream_rng(master: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    seed_rng(derive_seed(master, label, indices))
}

/// RNG seeded directly from one integer (entry-point seeds).
pub fn seed_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
