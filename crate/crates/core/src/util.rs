//! Small shared helpers: deterministic seed derivation and stable float sums.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; mixes indices into independent seed streams.
pub fn mix_seed(master: u64, salt: u64) -> u64 {
    let mut z = master ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG stream derived from a master seed and a stream index.
pub fn derived_rng(master: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(master, salt))
}

/// Pairwise summation; deterministic and low error for long reductions.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const CHUNK: usize = 128;
    if values.len() <= CHUNK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Formats an f64 with 17 significant digits; survives a parse round-trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
