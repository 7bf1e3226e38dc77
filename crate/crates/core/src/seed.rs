//! Seed derivation.
//!
//! Every random stream in the pipeline is derived from a named parent seed by
//! [`split`]: `child = mix(parent ^ mix(stream + GOLDEN))`, where `mix` is the
//! SplitMix64 finalizer. Trial `i` of a campaign uses `split(campaign_seed, i)`,
//! scene `i` of a generation run uses `split(generation_seed, i)`, and so on.
//! Results therefore never depend on evaluation order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed of child stream `stream` from `parent`.
pub fn split(parent: u64, stream: u64) -> u64 {
    mix(parent ^ mix(stream.wrapping_add(GOLDEN)))
}

/// Derive a child seed from a textual label (e.g. `"false-positives"`).
pub fn split_named(parent: u64, label: &str) -> u64 {
    // FNV-1a keeps labels stable across platforms and releases.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    split(parent, h)
}

/// The RNG used throughout the crate.
pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
