//! Seed derivation for rounds.
//!
//! `round_seed(master, i) = splitmix64(master + (i + 1) · 0x9E3779B97F4A7C15)`.
//! Each round then derives one seed per consumer (split, model) with the same
//! mix applied to `round_seed + stream`.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn round_seed(master_seed: u64, round_index: usize) -> u64 {
    splitmix64(master_seed.wrapping_add((round_index as u64 + 1).wrapping_mul(GOLDEN_GAMMA)))
}

pub(crate) const SPLIT_STREAM: u64 = 1;
pub(crate) const MODEL_STREAM: u64 = 2;

pub(crate) fn stream_seed(round_seed: u64, stream: u64) -> u64 {
    splitmix64(round_seed.wrapping_add(stream.wrapping_mul(GOLDEN_GAMMA)))
}
