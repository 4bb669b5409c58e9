//! Counter-based seed derivation.
//!
//! Every independent unit of random work (an angle batch, a benchmark
//! repetition, a grid cell) gets its own ChaCha8 stream whose seed is a
//! SplitMix64 hash of the root seed and the unit's coordinates. Results are
//! therefore independent of scheduling and worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Recorded in dataset metadata so that stored datasets name the generator
/// that produced them.
pub const RNG_ALGORITHM: &str =
    "chacha8-splitmix64-v1; normals: rand_distr 0.4 StandardNormal (ziggurat)";

pub(crate) mod tag {
    pub const HOMODYNE: u64 = 0x686f6d;
    pub const HETERODYNE: u64 = 0x686574;
    pub const SHUFFLE: u64 = 0x736875;
    pub const ROTATE: u64 = 0x726f74;
    pub const REPETITION: u64 = 0x726570;
    pub const OFFSET: u64 = 0x6f6666;
    pub const REFERENCE: u64 = 0x726566;
    pub const CELL: u64 = 0x63656c;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a root seed with a path of counters into a child seed.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(root: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, path))
}
