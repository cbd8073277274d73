//! Stateless mixing functions behind every random choice in the crate.
//!
//! Two kinds of randomness are used:
//!
//! * keyed draws ([`KeyedBernoulli`]) where the state of an object (an edge, a
//!   tree vertex) is a pure function of `(seed, object key)`, so huge
//!   configurations never need to be stored;
//! * sequential streams ([`trial_rng`]) for walks and tree sampling, seeded
//!   from [`derive_seed`].

use rand_pcg::Pcg64Mcg;
use rand::SeedableRng;

/// Weyl increment (2^64 / golden ratio, odd).
pub const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Domain separator for trial seed derivation.
const SEED_DOMAIN: u64 = 0x005e_ed0f_7a1a_1000;

/// SplitMix64 finalizer. A bijection on `u64`.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-trial seed: `mix64(mix64(master ^ D) + index * GOLDEN_GAMMA)`.
///
/// For a fixed master the map `index -> seed` is a composition of bijections
/// of `u64`, hence injective over every index (in particular the first 2^32).
#[inline]
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master ^ SEED_DOMAIN).wrapping_add(index.wrapping_mul(GOLDEN_GAMMA)))
}

/// Uniform in `[0, 1)` from the top 53 bits.
#[inline(always)]
pub fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sequential generator for one trial.
pub fn trial_rng(seed: u64) -> Pcg64Mcg {
    Pcg64Mcg::seed_from_u64(seed)
}

/// Absorbs a sequence of words into a 64-bit digest keyed by `seed`.
#[derive(Clone, Copy, Debug)]
pub struct KeyedHash {
    state: u64,
}

impl KeyedHash {
    #[inline(always)]
    pub fn new(seed: u64, domain: u64) -> Self {
        KeyedHash { state: mix64(seed ^ mix64(domain)) }
    }

    #[inline(always)]
    pub fn absorb(self, word: u64) -> Self {
        KeyedHash { state: mix64(self.state ^ word).wrapping_add(GOLDEN_GAMMA) }
    }

    #[inline(always)]
    pub fn finish(self) -> u64 {
        mix64(self.state)
    }
}

/// Bernoulli(p) decision on a 64-bit hash: open iff `unit_f64(h) < p`.
///
/// The comparison is done on integers so that `p = 0` never and `p = 1`
/// always succeeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeyedBernoulli {
    p: f64,
    cut: u64,
}

impl KeyedBernoulli {
    pub fn new(p: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&p));
        let cut = (p * (1u64 << 53) as f64).ceil() as u64;
        KeyedBernoulli { p, cut }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    #[inline(always)]
    pub fn accept(&self, hash: u64) -> bool {
        (hash >> 11) < self.cut
    }
}
