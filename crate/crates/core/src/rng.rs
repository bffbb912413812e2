//! Reproducible randomness. Every stochastic step in the pipeline draws from
//! a ChaCha stream seeded through [`derive`], so a single master seed fixes
//! every dataset, fold assignment, and learner fit bit-for-bit.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Prng = ChaCha12Rng;

pub fn seeded(seed: u64) -> Prng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Derive a child seed from a master seed and a tag path (layer, fold,
/// outcome, learner, ...). SplitMix64 mixing keeps distinct paths decorrelated.
pub fn derive(master: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix(master);
    for &t in tags {
        h = splitmix(h ^ t.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal draw via Box-Muller.
pub fn std_normal(rng: &mut Prng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// In-place seeded Fisher-Yates shuffle.
pub fn shuffle<T>(items: &mut [T], rng: &mut Prng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}
