//! Seeded substreams.
//!
//! Every random experiment in the crate derives its generators from a master
//! seed and a path of indices (row, trial, grid point), so results never
//! depend on generation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn rng_for(seed: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(substream(seed, index))
}

/// Tag values used to keep unrelated substream families apart.
pub(crate) mod tags {
    pub const ROW_JITTER: u64 = 0x6A17_7E55;
    pub const ENTRY: u64 = 0xE477_0001;
}
