//! Counter-based pseudorandom functions.
//!
//! Every random decision in a trial is a pure function of
//! `(master_seed, trial_id, key, lane)`. Two runs that share those inputs see
//! the same draw no matter how trials are scheduled across threads, and two
//! runs that differ only in a probability threshold compare the *same* uniform
//! against different cutoffs. That is what makes coupled comparisons exact.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent sub-streams of the per-trial randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Lane {
    /// Infection attempt on an exposure event.
    Infection = 0x1,
    /// Patch (antipacket) forwarding on an exposure event.
    Patch = 0x2,
    /// Seed and target selection.
    Setup = 0x3,
    /// Per-trial stream regeneration (mobility or mixing contacts).
    Scenario = 0x4,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn hash4(master_seed: u64, trial_id: u64, key: u64, lane: Lane) -> u64 {
    let mut z = mix64(master_seed.wrapping_add(GOLDEN));
    z = mix64(
        z ^ trial_id
            .wrapping_mul(0xD1B5_4A32_D192_ED03)
            .wrapping_add(GOLDEN),
    );
    z = mix64(z ^ key.wrapping_mul(0xAEF1_7502_108E_F2D9).wrapping_add(GOLDEN));
    mix64(z ^ (lane as u64).wrapping_mul(0xDB4F_0B91_75AE_2165))
}

/// Uniform draw in `[0, 1)` with 53 bits of resolution.
#[inline]
pub fn uniform(master_seed: u64, trial_id: u64, key: u64, lane: Lane) -> f64 {
    (hash4(master_seed, trial_id, key, lane) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A conventional sequential generator for draws that have no natural key
/// (seed sets, regenerated traces).
pub fn trial_rng(master_seed: u64, trial_id: u64, lane: Lane) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash4(master_seed, trial_id, 0, lane))
}

/// Seed for a regenerated per-trial scenario, derived from `(master_seed, trial_id)`.
pub fn scenario_seed(master_seed: u64, trial_id: u64) -> u64 {
    hash4(master_seed, trial_id, 0, Lane::Scenario)
}
