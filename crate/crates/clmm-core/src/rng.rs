//! Seeded randomness with deterministic stream splitting.
//!
//! All sampling in this crate draws from a [`RandomSource`], a thin wrapper
//! around ChaCha8 that remembers its seed and can derive independent child
//! streams without consuming its own state. Identical seeds produce
//! bit-identical draw sequences on every platform, which is what makes the
//! CLI's byte-identical re-run guarantee possible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; scrambles a seed into a well-mixed child seed.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic random stream identified by a `u64` seed.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// The seed this source was created with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw from `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Derive the child seed for stream `index` without touching this
    /// source's state. Pure in `(seed, index)`, so parallel workers can be
    /// handed reproducible sub-streams in any order.
    pub fn child_seed(&self, index: u64) -> u64 {
        mix(self.seed ^ mix(index.wrapping_add(0x5851f42d4c957f2d)))
    }

    /// Independent source for stream `index`; see [`RandomSource::child_seed`].
    pub fn split(&self, index: u64) -> RandomSource {
        RandomSource::new(self.child_seed(index))
    }
}
