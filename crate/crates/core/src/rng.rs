//! Seed derivation.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by
//! `(seed, purpose)`: the purpose label is hashed with FNV-1a, mixed with the
//! seed through SplitMix64, and the result seeds the generator. Indexed
//! streams (one per permutation, per benchmark replicate, ...) additionally
//! select the ChaCha stream number, so results do not depend on the order in
//! which parallel workers consume them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed for a named purpose.
pub fn derive_seed(seed: u64, purpose: &str) -> u64 {
    splitmix64(seed ^ fnv1a(purpose))
}

/// Generator for a named purpose.
pub fn stream(seed: u64, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose))
}

/// Generator for the `index`-th replicate of a named purpose.
pub fn indexed_stream(seed: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    let mut rng = stream(seed, purpose);
    rng.set_stream(index);
    rng
}
