//! Random number generation and seed derivation.
//!
//! Every stream is a `Xoshiro256PlusPlus` generator whose 256-bit state is
//! expanded from a 64-bit seed by SplitMix64. Replication seeds are derived
//! as
//!
//! ```text
//! h = sm(scenario_id); h = sm(h ^ T); h = sm(h ^ m); h = sm(h ^ rep_index)
//! rep_seed = sm(base_seed ^ h)
//! ```
//!
//! where `sm` is the SplitMix64 output function ([`splitmix64`]).

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer applied to `x` without the increment.
pub(crate) fn splitmix64_mix(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One SplitMix64 step from state `x`: `mix(x + golden_gamma)`.
pub fn splitmix64(x: u64) -> u64 {
    splitmix64_mix(x.wrapping_add(GOLDEN_GAMMA))
}

/// Mixes the cell coordinates and replication index into one word.
pub fn cell_mix(scenario_id: u64, t: u64, m: u64, rep_index: u64) -> u64 {
    let mut h = splitmix64(scenario_id);
    h = splitmix64(h ^ t);
    h = splitmix64(h ^ m);
    splitmix64(h ^ rep_index)
}

pub fn replication_seed(base_seed: u64, scenario_id: u64, t: u64, m: u64, rep_index: u64) -> u64 {
    splitmix64(base_seed ^ cell_mix(scenario_id, t, m, rep_index))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
