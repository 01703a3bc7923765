//! Counter-based seed derivation.
//!
//! Sub-seeds are a bijective mix of `(master, index)`, so they do not depend
//! on the order in which realizations are executed.

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; a bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for realization `index` under `master`.
///
/// For a fixed master the map `index -> sub-seed` is injective: the argument
/// of the outer bijection is `mix64(master) + (index + 1) * gamma` with an odd
/// gamma.
pub fn seed_stream(master: u64, index: u64) -> u64 {
    mix64(mix64(master).wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Independent stream for one purpose (lattice construction, dynamics, ...)
/// within a realization.
pub fn purpose_seed(sub_seed: u64, purpose: Purpose) -> u64 {
    seed_stream(sub_seed, purpose as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Lattice = 0,
    Dynamics = 1,
}
