//! Seeding. Every random draw comes from ChaCha8, one stream per episode:
//! episode `e` of a run seeded with `seed` uses `ChaCha8Rng::seed_from_u64(seed)`
//! with its stream id set to `e`. Replicate seeds for sweeps are SplitMix64
//! outputs of the base seed, which are pairwise distinct.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64(seed), stream = episode index";

pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

/// SplitMix64 finalizer; a bijection on u64.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `r` under `base_seed`.
pub fn replicate_seed(base_seed: u64, replicate: usize) -> u64 {
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    splitmix64(base_seed.wrapping_add(GOLDEN.wrapping_mul(replicate as u64 + 1)))
}
