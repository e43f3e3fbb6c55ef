//! Deterministic RNG stream derivation.
//!
//! One run seed fans out to independent walker streams through SplitMix64
//! folding, so results never depend on thread scheduling or worker count:
//!
//! ```text
//! walker_seed = fold(run_seed, role, interval_index, path_index)
//! rng         = ChaCha8Rng::seed_from_u64(walker_seed)
//! ```

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Role tags keep streams of different purposes disjoint even when their
/// (interval, path) coordinates collide.
#[derive(Debug, Clone, Copy)]
pub enum StreamRole {
    InitConfig = 1,
    MainWalker = 2,
    SideWalker = 3,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold the coordinates of a walker into a 64-bit stream seed.
pub fn derive_seed(run_seed: u64, role: StreamRole, interval: u64, path: u64) -> u64 {
    let mut state = run_seed;
    let mut out = splitmix64(&mut state);
    for word in [role as u64, interval, path] {
        state ^= word.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        out ^= splitmix64(&mut state);
    }
    out
}

/// The walker RNG for a derived seed.
pub fn walker_rng(walker_seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(walker_seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_distinct_and_stable() {
        let a = derive_seed(42, StreamRole::SideWalker, 0, 0);
        let b = derive_seed(42, StreamRole::SideWalker, 0, 1);
        let c = derive_seed(42, StreamRole::SideWalker, 1, 0);
        let d = derive_seed(42, StreamRole::MainWalker, 0, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        // Re-derivation is stable.
        assert_eq!(a, derive_seed(42, StreamRole::SideWalker, 0, 0));
        // Different run seeds decorrelate.
        assert_ne!(a, derive_seed(43, StreamRole::SideWalker, 0, 0));
    }
}
