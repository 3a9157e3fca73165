//! Seed derivation. Every generated artifact draws from its own stream,
//! keyed by a domain label and a tuple of integers (level, seed, attempt...).
//!
//! Derivation: the label is hashed with 64-bit FNV-1a, then each integer is
//! folded in with `h = splitmix64(h ^ part)`. The result seeds
//! `Xoshiro256PlusPlus::seed_from_u64`, which expands it with SplitMix64.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

pub const PRNG_NAME: &str = "xoshiro256++ (splitmix64-seeded)";

/// One SplitMix64 output for `x` (stateless form).
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn derive_seed(domain: &str, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(fnv1a(domain.as_bytes())), |h, &p| splitmix64(h ^ p))
}

pub fn stream(domain: &str, parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(domain, parts))
}
