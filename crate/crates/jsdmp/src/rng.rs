//! Seed plumbing. Every stochastic stage draws from its own ChaCha8 stream so
//! that, for example, changing the number of training epochs cannot shift the
//! random numbers used for data splits.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent RNG streams, one per stage of the pipeline.
#[derive(Clone, Copy, Debug)]
pub enum Domain {
    ModelInit = 0,
    Splits = 1,
    Training = 2,
    Synthesis = 3,
    GradCheck = 4,
}

/// Deterministic RNG for `(seed, domain)`. The pair is embedded directly in
/// the ChaCha key, so distinct domains give unrelated streams.
pub fn seeded_rng(seed: u64, domain: Domain) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
