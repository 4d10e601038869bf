//! Deterministic seed derivation for independent random streams.

/// SplitMix64 finaliser.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed, a stream tag and an index.
pub fn derive(base: u64, stream: u64, index: u64) -> u64 {
    mix(mix(base ^ mix(stream)).wrapping_add(index))
}
