//! Seed derivation so that independent sub-streams (per class, per epoch,
//! per pair) stay deterministic regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// splitmix64 finalizer; decorrelates nearby seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a salt.
pub fn mix(base: u64, salt: u64) -> u64 {
    splitmix64(base ^ splitmix64(salt))
}

/// Derive a child seed keyed by a class pair.
pub fn mix_pair(base: u64, lo: usize, hi: usize) -> u64 {
    mix(base, (lo as u64) << 32 | hi as u64)
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
