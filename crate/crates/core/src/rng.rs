//! Random number generation.
//!
//! Every stochastic component uses xoshiro256** whose 256-bit state is filled
//! from a 64-bit seed with splitmix64. Both generators are fixed so that runs
//! are reproducible bit for bit across platforms.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

pub type SimRng = Xoshiro256StarStar;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 finaliser applied to `x + GOLDEN_GAMMA`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for stream `index` derived from `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base) ^ index.wrapping_mul(GOLDEN_GAMMA))
}

/// xoshiro256** seeded through splitmix64.
pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
