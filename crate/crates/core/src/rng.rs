//! Seeded randomness.
//!
//! Every run owns one [`SimRng`] (ChaCha8). Child streams are derived from a
//! parent seed and a stream index with SplitMix64 finalisation, so a replica's
//! seed depends only on `(master, stream, index)` and adding replicas never
//! perturbs existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of child `index` in `stream` under `parent`.
pub fn derive_seed(parent: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ splitmix64(stream)).wrapping_add(index))
}

/// Exponential waiting time with the given positive rate.
pub fn exp_time<R: rand::Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    // 1 - U lies in (0, 1], so the logarithm is finite.
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}
