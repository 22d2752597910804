//! Seeded random streams.
//!
//! Every stochastic routine takes its generator from here so that a single
//! 64-bit seed fixes an entire training or evaluation run. Independent
//! sub-streams (one per market, one per breeding step) are derived by hashing
//! the parent seed together with a purpose tag and indices, which keeps the
//! result independent of the order in which parallel markets finish.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags used when deriving child seeds.
pub mod stream {
    pub const TRAIN_MARKET: u64 = 1;
    pub const BREED: u64 = 2;
    pub const EVAL_MARKET: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SPLIT: u64 = 5;
}

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path of indices.
pub fn child_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn child(seed: u64, path: &[u64]) -> SimRng {
    seeded(child_seed(seed, path))
}
