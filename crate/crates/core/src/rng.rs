//! Keyed, counter-style random streams. Every draw is a pure function of its key,
//! so records can be generated in any order and still match bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one well-mixed key.
pub fn key(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(GOLDEN, |acc, &w| mix64(acc.wrapping_add(GOLDEN) ^ mix64(w)))
}

pub fn keyed_rng(words: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(key(words))
}

/// Uniform in [0, 1) from a key.
pub fn unit_from_key(words: &[u64]) -> f64 {
    (key(words) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
