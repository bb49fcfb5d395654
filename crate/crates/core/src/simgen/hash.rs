//! Stateless integer hashing for per-pixel and per-sequence randomness.

/// SplitMix64 finaliser.
pub fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn mix(a: u64, b: u64) -> u64 {
    splitmix(splitmix(a) ^ b.rotate_left(17))
}

/// Uniform in [0, 1) from a hash of the keys.
pub fn unit(keys: &[u64]) -> f64 {
    let h = keys.iter().fold(0x1234_5678u64, |acc, &k| mix(acc, k));
    (h >> 11) as f64 / (1u64 << 53) as f64
}
