//! Rounding and seeding helpers shared by every stage.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Round half away from zero and clamp into `0..=255`.
#[inline]
pub fn quantize(v: f64) -> u8 {
    libm::round(v).clamp(0.0, 255.0) as u8
}

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-item seed: `splitmix64(master ^ splitmix64(index))`.
///
/// Every derived generator in the toolkit goes through this function, so
/// work items can be produced in any order and still yield the same bytes.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
