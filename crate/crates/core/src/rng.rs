//! Seeded randomness.
//!
//! Every stochastic operation takes an explicit `u64` seed and draws from
//! [`ChaCha8Rng`], which produces the same stream on every platform. Child
//! seeds for per-sample fan-out come from [`derive_seed`] (SplitMix64 mixing),
//! so results do not depend on how work is scheduled.

pub use rand_chacha::ChaCha8Rng as Rng;
use rand::SeedableRng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed `hash(master, index)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Child seed keyed by a stream tag and an index.
pub fn derive_seed2(master: u64, stream: u64, index: u64) -> u64 {
    derive_seed(derive_seed(master, stream), index)
}
