//! Seeded random streams. Every consumer draws from its own ChaCha stream so
//! adding draws in one place never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named stream identifiers.
pub mod stream {
    pub const CORRUPT: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INIT_WEIGHTS: u64 = 3;
    pub const INIT_FACTORS: u64 = 4;
    pub const DROPOUT: u64 = 5;
    pub const SYNTHETIC: u64 = 6;
    pub const SAMPLER: u64 = 7;
    pub const BATCHES: u64 = 8;
    pub const FOLDS: u64 = 9;
}

/// RNG for `(seed, stream, index)`; `index` separates repeated uses such as epochs.
pub fn rng_for(seed: u64, stream: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}
