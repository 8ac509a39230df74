//! Seed derivation: every random choice in the pipeline flows from a single
//! base seed fanned out through a counter-based hash, so any stage can be
//! re-run independently and reproducibly.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; full-period mixer with good avalanche behavior.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_label(label: &str) -> u64 {
    // FNV-1a, stable across platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a child seed from `(base, label, counter)`.
pub fn derive_seed(base: u64, label: &str, counter: u64) -> u64 {
    splitmix64(base ^ splitmix64(hash_label(label)) ^ splitmix64(counter.wrapping_mul(0xa076_1d64_78bd_642f)))
}

/// A deterministic RNG for the given stage label and counter.
///
/// ChaCha8 is platform-independent, so identical seeds give identical
/// streams everywhere.
pub fn stream(base: u64, label: &str, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, label, counter))
}
