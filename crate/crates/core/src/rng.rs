//! Per-trial random streams.
//!
//! Every trial owns an independent ChaCha8 stream: the key is derived from
//! the master seed and the 64-bit stream id is the trial index. A trial's
//! draws therefore depend only on `(master_seed, trial_index)`, never on
//! scheduling or thread count. Within a step, draws are consumed in cell order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}

/// Seed for the `index`-th sub-run of a composite experiment (scaling
/// points, paired no-go runs). SplitMix64 finalizer over `seed + index`.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
