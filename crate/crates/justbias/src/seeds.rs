//! Deterministic seed derivation for per-person and per-replication streams.
//!
//! Child seeds come from a SplitMix64 finisher over (master, index), so any
//! unit of work can be generated independently and in parallel with results
//! identical to sequential order.

/// Derive the seed for child stream `index` of `master`.
pub fn child_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
