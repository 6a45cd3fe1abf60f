//! Seed plumbing. Every stochastic step draws from its own ChaCha stream whose
//! seed is derived from the master seed and a fixed counter, so runs are
//! reproducible and independent of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed number `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix(seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(mix(index.wrapping_add(0x632b_e59b_d9b4_e019))))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
