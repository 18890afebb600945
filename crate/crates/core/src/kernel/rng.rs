//! Seed derivation.
//!
//! Every random quantity in the crate is drawn from a [`ChaCha8Rng`] whose seed
//! is derived from a master seed and a stream id with [`derive_seed`]. Work that
//! is split across threads therefore draws the same numbers no matter how it is
//! scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids used by the crate. Callers are free to pick any other values.
pub mod stream {
    pub const INIT: u64 = 0x1000;
    pub const SHUFFLE: u64 = 0x2000;
    pub const FISHER: u64 = 0x3000;
    pub const DIRECTIONS: u64 = 0x4000;
    pub const PERTURB: u64 = 0x5000;
    pub const MONTE_CARLO: u64 = 0x6000;
    pub const VI: u64 = 0x7000;
    pub const BLOBS: u64 = 0x8000;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(seed, stream)`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

/// Child seed for a path of stream ids, e.g. `(master, [family, cell])`.
pub fn derive_path(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &p| derive_seed(s, p))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
