use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use polyfit::benchmarks::generate_resources;
use polyfit::exec::Execution;
use polyfit::metrics::{estimate_errors, sample_directions};
use polyfit::polytope::AffineNorm;
use polyfit::regions::{Region, RegionOracle};
use polyfit::trainer::{batch_step, initial_polytope, TrainConfig};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn cases() -> Vec<(&'static str, RegionOracle)> {
    vec![
        ("hypersphere_10", RegionOracle::hypersphere(10, 1.0).unwrap()),
        ("ellipse", RegionOracle::ellipse([0.0, 0.0], [1.0, 0.5], 0.3).unwrap()),
        ("minkowski_20x6", RegionOracle::minkowski(generate_resources(20, 6, 0).unwrap()).unwrap()),
    ]
}

fn estimate(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimate_errors");
    group.sample_size(10);
    for (name, region) in cases() {
        let n = region.dim();
        let cfg = TrainConfig { m: Some(4 * n), ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = initial_polytope(&region, &[], AffineNorm::identity(n), &cfg, &mut rng).unwrap();
        for (mode, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(mode, name), &exec, |b, &exec| {
                b.iter(|| estimate_errors(&p, &region, &[], black_box(1000), 1, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch_step");
    group.sample_size(10);
    for (name, region) in cases() {
        let n = region.dim();
        let cfg = TrainConfig { m: Some(4 * n), ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = initial_polytope(&region, &[], AffineNorm::identity(n), &cfg, &mut rng).unwrap();
        let dirs = sample_directions(n, 64, &mut rng);
        for (mode, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(mode, name), &exec, |b, &exec| {
                b.iter(|| batch_step(&p, &region, &[], black_box(&dirs), 0.5, 1e-6, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, estimate, batch);
criterion_main!(benches);
