//! Seed derivation and the crate-wide RNG type.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer. Used to derive independent sub-streams from one seed.
pub fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, stream: u64) -> SimRng {
    SimRng::seed_from_u64(mix(seed, stream))
}

/// Uniform draw in the open interval (0, 1).
pub(crate) fn open_unit(rng: &mut SimRng) -> f64 {
    use rand::Rng;
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Exponential variate with the given rate (events per unit time).
pub(crate) fn exponential(rng: &mut SimRng, rate: f64) -> f64 {
    -libm::log(open_unit(rng)) / rate
}
