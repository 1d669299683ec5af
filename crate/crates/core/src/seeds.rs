//! Deterministic seed derivation.
//!
//! Every random decision in the crate (weight init, epoch shuffles, dead-neuron
//! revival, evaluation jitter) draws from a ChaCha stream whose seed is derived
//! from one master seed plus a stream label. Streams are independent of each
//! other and of iteration order, so adding a consumer never perturbs the others.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INIT: u64 = 1;
pub const STREAM_SHUFFLE: u64 = 2;
pub const STREAM_REVIVE: u64 = 3;
pub const STREAM_JITTER: u64 = 4;
pub const STREAM_SPLIT: u64 = 5;

/// Mixes a master seed with a stream label into an independent sub-seed
/// (splitmix64 finalizer over the combined words).
pub fn derive(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream))
}

/// Stream for one item within a stream, e.g. the shuffle of epoch `k` or the
/// jitter of sample `k`. Independent per item, so consumers may run in any
/// order (or in parallel) without changing the draws.
pub fn rng_for_item(seed: u64, stream: u64, item: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(derive(seed, stream), item))
}
