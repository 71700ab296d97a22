//! Deterministic seed derivation for parallel simulation.
//!
//! Every random decision in the crate is keyed by a master seed plus a
//! short tag path (replicate index, purpose, stratum, ...). Replicates can
//! then run on any number of worker threads and still produce bit-identical
//! results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; a well-mixed 64 -> 64 bit permutation.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a seed with a tag path into a single derived seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = mix64(master);
    for &t in tags {
        h = mix64(h ^ mix64(t));
    }
    h
}

/// A ChaCha stream keyed by `(master, tags...)`.
pub fn substream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}

/// Counter-based uniform in [0,1): a pure function of `(seed, index)`.
///
/// Used by the batch randomizers so each unit's draw is independent of
/// evaluation order.
#[inline]
pub fn indexed_uniform(seed: u64, index: u64) -> f64 {
    let bits = mix64(mix64(seed ^ 0x5851_f42d_4c95_7f2d) ^ mix64(index));
    // 53 high bits -> [0, 1)
    (bits >> 11) as f64 * (1.0 / 9007199254740992.0)
}
