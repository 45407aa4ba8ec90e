//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream addressed by
//! `(seed, domain, index)`. Workers can process indices in any order and
//! still see the same numbers, so parallel reductions stay bit-identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain tags keep unrelated consumers of one user seed apart.
pub mod domain {
    pub const SAMPLE: u64 = 0x5341_4d50;
    pub const BOOTSTRAP: u64 = 0x424f_4f54;
    pub const BOOTSTRAP_RETRY: u64 = 0x5245_5452;
    pub const LIMIT: u64 = 0x4c49_4d49;
    pub const DATASET: u64 = 0x4441_5441;
    pub const PREDICTAND: u64 = 0x5052_4544;
    pub const NESTED: u64 = 0x4e45_5354;
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `(seed, domain, index)`.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(domain)) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Independent stream number `index` under `(seed, domain)`.
pub fn stream(seed: u64, domain: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(domain)));
    rng.set_stream(index);
    rng
}
