//! Deterministic seed derivation and RNG construction.
//!
//! Every stochastic component (data generation, weight init, dropout masks,
//! patch placement) draws from a ChaCha stream keyed by a seed derived from
//! a master seed and one or more stream indices. Derivation is a pure hash,
//! so parallel work items get independent, schedule-independent streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; good avalanche, cheap, stable across platforms.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a stream index.
pub fn derive_seed(parent: u64, stream: u64) -> u64 {
    splitmix64(parent ^ splitmix64(stream.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// Derive a child seed from a parent seed and two stream indices.
pub fn derive_seed2(parent: u64, a: u64, b: u64) -> u64 {
    derive_seed(derive_seed(parent, a), b)
}

/// Deterministic RNG for a given seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
