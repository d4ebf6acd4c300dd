//! Deterministic seed derivation for replications and random substreams.
//!
//! `derive_seed(master, i) = splitmix64(splitmix64(master) + i)`. Every
//! consumer of randomness gets its own substream this way, so results do not
//! depend on execution order or worker count.

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master).wrapping_add(index))
}

/// Substream keyed by a label (FNV-1a of the bytes).
pub fn derive_seed_tag(master: u64, tag: &str) -> u64 {
    let h = tag
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01B3));
    derive_seed(master, h)
}
