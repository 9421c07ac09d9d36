//! Stable seed derivation.
//!
//! Every random draw in the pipeline uses a generator seeded from the global
//! seed mixed with a stage label and integer indices, so results never depend
//! on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `global`, a stage label and indices into a new 64-bit seed.
pub fn derive(global: u64, stage: &str, indices: &[u64]) -> u64 {
    // FNV-1a over the label keeps the mapping stable across builds.
    let mut label = 0xCBF2_9CE4_8422_2325u64;
    for b in stage.as_bytes() {
        label ^= u64::from(*b);
        label = label.wrapping_mul(0x0100_0000_01B3);
    }
    let mut h = splitmix64(global ^ splitmix64(label));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(global: u64, stage: &str, indices: &[u64]) -> Rng {
    rng(derive(global, stage, indices))
}
