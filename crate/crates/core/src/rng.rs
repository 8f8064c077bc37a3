//! Reproducible randomness.
//!
//! Every random choice in the crate draws from ChaCha8 (`rand_chacha`),
//! seeded with [`seeded`]. Sub-streams come from [`derive_seed`], which
//! folds tags into a seed with the SplitMix64 finalizer. Bounded integers and
//! shuffles use only `next_u64` plus plain rejection, so a seed produces the
//! same permutation on every platform and `rand` release.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed from `base` and a list of tags.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Uniform integer in `0..n` by rejection. `n` must be positive.
pub fn below(rng: &mut Rng, n: u64) -> u64 {
    debug_assert!(n > 0);
    // 2^64 mod n values at the top of the range are rejected.
    let reject = (u64::MAX % n).wrapping_add(1) % n;
    let limit = u64::MAX - reject;
    loop {
        let v = rng.next_u64();
        if reject == 0 || v <= limit {
            return v % n;
        }
    }
}

/// In-place Fisher–Yates shuffle.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// Uniform float in `[0, 1)` with 53 bits of precision.
pub fn unit(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
