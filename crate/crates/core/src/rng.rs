//! Deterministic seed derivation.
//!
//! Every random stream in the pipeline is a ChaCha20 generator seeded from
//! SHA-256 of `(master seed, domain label, indices)`. Streams are therefore
//! independent of each other and bit-reproducible across platforms.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Derives an independent generator for a named domain of the simulation.
pub fn stream(master: u64, domain: &str, indices: &[u64]) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update((domain.len() as u64).to_le_bytes());
    hasher.update(domain.as_bytes());
    for ix in indices {
        hasher.update(ix.to_le_bytes());
    }
    ChaCha20Rng::from_seed(hasher.finalize().into())
}
