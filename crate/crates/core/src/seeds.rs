//! Deterministic seed derivation.
//!
//! Every random stream in the pipeline is derived from a single master seed
//! plus a list of integer tags (task index, run index, segment, branch, ...).
//! Derivation is a splitmix64 chain, so the same (seed, tags) always yields
//! the same stream and distinct tags yield statistically independent ones.

/// One splitmix64 scramble step.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `base` and a sequence of tags.
pub fn derive(base: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(base);
    for &t in tags {
        s = splitmix64(s ^ t.wrapping_mul(0xff51_afd7_ed55_8ccd));
    }
    s
}
