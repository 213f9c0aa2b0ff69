//! Seeded random streams.
//!
//! All randomness comes from `Pcg64` (PCG XSL RR 128/64). Batch item `i` of a
//! run seeded with `s` draws from its own stream derived from `(s, i)`, so
//! results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_pcg::Pcg64;

pub type Rng = Pcg64;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn seeded(seed: u64) -> Rng {
    Pcg64::seed_from_u64(seed)
}

/// Independent stream for batch item `index` of a run seeded with `seed`.
pub fn task_rng(seed: u64, index: u64) -> Rng {
    Pcg64::seed_from_u64(mix(seed ^ mix(index.wrapping_add(0x9e37_79b9_7f4a_7c15))))
}
