//! Shared fixtures for the benchmarks: a fixed model and trajectory at the
//! scale the experiments use, so runs are comparable across changes.

use clmm_core::simulate::{sample_trajectory, Trajectory};
use clmm_core::stochastic::Partition;
use clmm_core::{ClMmmc, RandomSource};

pub const BENCH_STEPS: usize = 5000;

/// Experiment-scale model: 8 visible states, 2 latent states, one block.
pub fn bench_model() -> ClMmmc {
    let mut rng = RandomSource::new(0xbe7c);
    ClMmmc::random(8, 2, Partition::single_block(8), &mut rng).unwrap()
}

/// One trajectory of [`BENCH_STEPS`] transitions from [`bench_model`].
pub fn bench_trajectory(model: &ClMmmc) -> Trajectory {
    sample_trajectory(model, BENCH_STEPS, &mut RandomSource::new(0x7ab1))
}
