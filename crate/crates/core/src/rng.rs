//! Seeded, portable randomness.
//!
//! Every randomized step draws from ChaCha8, whose output stream is fully
//! specified and identical across platforms. Sub-seeds are derived with the
//! SplitMix64 finalizer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from a base seed and a stream label.
pub fn derive_seed(base: u64, label: u64) -> u64 {
    splitmix64(splitmix64(base) ^ label.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_differ_and_repeat() {
        assert_eq!(derive_seed(42, 1), derive_seed(42, 1));
        assert_ne!(derive_seed(42, 1), derive_seed(42, 2));
        assert_ne!(derive_seed(42, 1), derive_seed(43, 1));
    }

    #[test]
    fn seeded_stream_is_reproducible() {
        let a: Vec<u32> = (0..8).map(|_| 0).scan(seeded(9), |r, _: u32| Some(r.gen())).collect();
        let b: Vec<u32> = (0..8).map(|_| 0).scan(seeded(9), |r, _: u32| Some(r.gen())).collect();
        assert_eq!(a, b);
    }
}
