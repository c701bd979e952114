//! Seeding helpers.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng`. Its output
//! stream is fixed by the algorithm, so a given seed produces the same
//! numbers on every platform. Sub-streams (one per game, per worker, per
//! purpose) are derived from a master seed with SplitMix64 so that work can
//! be reordered or parallelized without changing any individual draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive an independent child seed from `seed` and a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Derive a child seed keyed by a purpose tag, e.g. `"eval"`.
pub fn derive_tagged(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag bytes
    let h = tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    });
    derive_seed(seed, h)
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
