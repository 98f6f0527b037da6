//! Deterministic seed derivation.
//!
//! Every randomized component takes a `u64` seed and derives sub-seeds for
//! its internal consumers through [`mix`], so that independent draws never
//! share RNG state and whole runs replay bit-exactly from a single seed.

/// Domain-separation tags for seed derivation.
pub mod tag {
    pub const TRANSFORM_P: u64 = 0x01;
    pub const TRANSFORM_Q: u64 = 0x02;
    pub const FPS_START: u64 = 0x03;
    pub const JITTER: u64 = 0x04;
    pub const DROPOUT: u64 = 0x05;
    pub const INIT: u64 = 0x06;
    pub const STEP: u64 = 0x07;
    pub const MC_PASS: u64 = 0x08;
    pub const HEAD_INIT: u64 = 0x09;
}

/// Mix a base seed with a tag into a new 64-bit seed (splitmix64 finalizer).
pub fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(tag.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with two tags (e.g. a purpose and a step counter).
pub fn mix2(seed: u64, tag_a: u64, tag_b: u64) -> u64 {
    mix(mix(seed, tag_a), tag_b)
}
