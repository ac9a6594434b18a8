use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use graphnet::graph::{laplacian, lattice_adjacency};
use graphnet::losses::LossKind;
use graphnet::solver::{self, FitSpec};
use graphnet::tensor_io::{generate_synthetic, LatticeShape, NoiseLevel, TruthSpec};

fn path_sweep(c: &mut Criterion) {
    let shape = LatticeShape::full([10, 10, 10, 5]).unwrap();
    let truth = TruthSpec { blobs: 3, noise: NoiseLevel::Snr(2.0), seed: 1, ..Default::default() };
    let (x, y, _) = generate_synthetic(&shape, &truth, 300).unwrap();
    let x = x.center().0.standardize().unwrap();
    let g = Arc::new(laplacian(&lattice_adjacency(&shape, true).unwrap()).unwrap());
    let mut spec = FitSpec::new(LossKind::Squared, g);
    spec.lambda_g = 1.0;
    let lmax = solver::lambda_max(&x, &y.values, &spec).unwrap();
    let path = solver::default_path(lmax, 8, 0.2);

    let mut group = c.benchmark_group("path_sweep_p5000");
    group.sample_size(10);
    let threads = [1, rayon::current_num_threads()];
    for &t in threads.iter().take(if threads[1] > 1 { 2 } else { 1 }) {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
        group.bench_with_input(BenchmarkId::new("threads", t), &t, |b, _| {
            b.iter(|| pool.install(|| black_box(solver::sweep_path(&x, &y.values, &spec, &path).unwrap())))
        });
    }
    group.finish();
}

criterion_group!(benches, path_sweep);
criterion_main!(benches);
