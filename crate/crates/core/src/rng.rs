//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed from a 64-bit seed, so outputs are stable across platforms and
//! independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a stream index.
#[inline]
pub fn mix(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named sub-streams so unrelated consumers of one seed never share draws.
pub mod stream {
    pub const CRACK: u64 = 1;
    pub const TILE: u64 = 2;
    pub const DEFECT: u64 = 3;
    pub const PLACEMENT: u64 = 4;
    pub const SENSOR: u64 = 5;
    pub const RAIN: u64 = 6;
    pub const ELASTIC: u64 = 7;
    pub const SPLIT: u64 = 8;
    pub const CROP: u64 = 9;
    pub const AUGMENT: u64 = 10;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_separates_indices() {
        let a: Vec<u64> = (0..64).map(|i| mix(42, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(a.len(), b.len());
        assert_ne!(mix(1, 0), mix(2, 0));
    }
}
