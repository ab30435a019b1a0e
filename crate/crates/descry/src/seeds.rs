//! Seed derivation. All randomness in the crate flows from explicit `u64`
//! seeds through these helpers, which keep unrelated consumers of a parent
//! seed on statistically independent streams.

/// Derives a child seed from a parent seed and a salt.
///
/// SplitMix64 finalizer over `base ^ (salt * golden ratio)`; adjacent salts
/// land far apart, so callers can use small counters as salts.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Namespace tag XOR-ed into user seeds before generating held-out
/// evaluation data, so evaluation never replays training randomness.
pub const EVAL_NAMESPACE: u64 = 0x4556_414C_5441_4721;
