//! Seed management: one 64-bit root seed fans out into independent,
//! reproducible streams.
//!
//! Every source of randomness in a run derives from [`SeedTree`], keyed by a
//! purpose label (and optionally an index), so adding a consumer never
//! perturbs existing streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, fixed here so derived streams are stable across platforms and
/// compiler versions.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Splittable source of named random streams, all derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Derived 64-bit seed for a purpose label.
    pub fn seed_for(&self, purpose: &str) -> u64 {
        fnv1a(&[&self.root.to_le_bytes()[..], purpose.as_bytes()].concat())
    }

    /// Derived seed for a purpose label plus an index (per-epoch, per-item).
    pub fn seed_for_indexed(&self, purpose: &str, index: u64) -> u64 {
        fnv1a(
            &[
                &self.root.to_le_bytes()[..],
                purpose.as_bytes(),
                &index.to_le_bytes()[..],
            ]
            .concat(),
        )
    }

    /// Counter-based generator for a purpose label.
    pub fn rng(&self, purpose: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed_for(purpose))
    }

    /// Counter-based generator for a purpose label plus an index.
    pub fn rng_indexed(&self, purpose: &str, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed_for_indexed(purpose, index))
    }
}
