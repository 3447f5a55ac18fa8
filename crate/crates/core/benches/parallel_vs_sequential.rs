//! Parallel vs sequential execution of the data-parallel kernels. Each
//! kernel produces bit-identical results under both strategies, so the only
//! difference measured is scheduling.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use pbgc::analysis::{loss_surface_with, SurfaceOptions};
use pbgc::datasets::generate_dataset_with;
use pbgc::metrics::{cost_matrix, mmd_detailed};
use pbgc::{AngleGrid, ArrayConfig, Dictionary, Exec, PathParams, SampleSet, ScenarioSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STRATEGIES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn random_set(seed: u64, n: usize, d: usize) -> SampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SampleSet::from_array(Array2::from_shape_simple_fn((n, d), || {
        rng.random_range(-1.0..1.0)
    }))
    .expect("finite samples")
}

fn bench_dictionary(c: &mut Criterion) {
    let grid = AngleGrid::front(32);
    let cfg = ArrayConfig::square(16);
    let mut g = c.benchmark_group("dictionary_build");
    for (name, exec) in STRATEGIES {
        g.bench_function(name, |b| {
            b.iter(|| Dictionary::build(&grid, &cfg, 1 << 30, exec).expect("within budget"))
        });
    }
    g.finish();
}

fn bench_generation(c: &mut Criterion) {
    let spec = ScenarioSpec::preset("paths-6-to-8", 16).expect("preset");
    let mut g = c.benchmark_group("dataset_generation");
    for (name, exec) in STRATEGIES {
        g.bench_function(name, |b| {
            b.iter(|| generate_dataset_with(&spec, 2000, 1, exec).expect("valid spec"))
        });
    }
    g.finish();
}

fn bench_surface(c: &mut Criterion) {
    let truth = PathParams::new(1.0, 1.0, 1.0);
    let cfg = ArrayConfig::square(16);
    let opts = SurfaceOptions {
        grid_points: 101,
        ..Default::default()
    };
    let mut g = c.benchmark_group("loss_surface");
    for (name, exec) in STRATEGIES {
        g.bench_function(name, |b| {
            b.iter(|| loss_surface_with(&truth, &cfg, &opts, exec).expect("valid surface"))
        });
    }
    g.finish();
}

fn bench_metrics(c: &mut Criterion) {
    let a = random_set(1, 500, 512);
    let b = random_set(2, 500, 512);
    let mut g = c.benchmark_group("metrics");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_with_input(BenchmarkId::new("cost_matrix", name), &exec, |bench, &e| {
            bench.iter(|| cost_matrix(black_box(&a), black_box(&b), e).expect("same dim"))
        });
        g.bench_with_input(BenchmarkId::new("mmd", name), &exec, |bench, &e| {
            bench.iter(|| mmd_detailed(black_box(&a), black_box(&b), e).expect("same dim"))
        });
    }
    g.finish();
}

fn bench_batch_synthesis(c: &mut Criterion) {
    let grid = AngleGrid::front(64);
    let cfg = ArrayConfig::square(16);
    let dict = Dictionary::build(&grid, &cfg, 1 << 30, Exec::Parallel).expect("within budget");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gains = Array2::from_shape_simple_fn((256, 64 * 64), || rng.random_range(-1.0..1.0));
    let mut g = c.benchmark_group("batch_synthesis");
    for (name, exec) in STRATEGIES {
        g.bench_function(name, |b| {
            b.iter(|| {
                dict.synthesize_batch(black_box(gains.view()), exec)
                    .expect("R² columns")
            })
        });
    }
    g.finish();
}

criterion_group!(
    benches,
    bench_dictionary,
    bench_generation,
    bench_surface,
    bench_metrics,
    bench_batch_synthesis
);
criterion_main!(benches);
