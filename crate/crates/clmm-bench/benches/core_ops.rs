use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use clmm_bench::{bench_model, bench_trajectory, BENCH_STEPS};
use clmm_core::estimate::{forward_backward_scaled, reestimate_single, UnreachedPolicy};
use clmm_core::simulate::sample_trajectory;
use clmm_core::{FreezeMask, RandomSource};

fn scaled_forward_backward(c: &mut Criterion) {
    let model = bench_model();
    let traj = bench_trajectory(&model);
    c.bench_function("forward_backward_scaled_t5000", |b| {
        b.iter(|| forward_backward_scaled(black_box(&model), black_box(&traj)).unwrap())
    });
}

fn one_em_update(c: &mut Criterion) {
    let model = bench_model();
    let traj = bench_trajectory(&model);
    let freeze = FreezeMask::none();
    c.bench_function("reestimate_single_t5000", |b| {
        b.iter(|| {
            reestimate_single(
                black_box(&model),
                black_box(&traj),
                &freeze,
                UnreachedPolicy::Error,
            )
            .unwrap()
        })
    });
}

fn trajectory_sampling(c: &mut Criterion) {
    let model = bench_model();
    c.bench_function("sample_trajectory_t5000", |b| {
        b.iter(|| {
            let mut rng = RandomSource::new(0x5eed);
            sample_trajectory(black_box(&model), BENCH_STEPS, &mut rng)
        })
    });
}

criterion_group!(
    benches,
    scaled_forward_backward,
    one_em_update,
    trajectory_sampling
);
criterion_main!(benches);
