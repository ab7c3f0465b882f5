//! Deterministic, platform-stable hashing for stub encoders and dataset
//! splits. `DefaultHasher` is not guaranteed stable across releases, so the
//! split and projection code uses these fixed functions instead.

/// FNV-1a over bytes, 64-bit.
pub(crate) fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 step; expands one hash into a stream of well-mixed words.
pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Maps a word to a float in [-1, 1).
pub(crate) fn unit_float(word: u64) -> f64 {
    // 53 mantissa bits -> [0, 1), then shift to [-1, 1)
    let frac = (word >> 11) as f64 / (1u64 << 53) as f64;
    2.0 * frac - 1.0
}
