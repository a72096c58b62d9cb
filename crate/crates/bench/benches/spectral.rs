use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use flab_bench::random_model_b;
use flab_core::floquet::DEFAULT_CLUSTER_TOL;
use flab_core::{
    degeneracy_metrics, midpoint_grid, reduced_density_matrix, sample_haar_product_state,
    spectral_decomposition, stream_rng, Axis, FloquetSystem, Observable, SignalSampler,
};

fn floquet(c: &mut Criterion) {
    let mut group = c.benchmark_group("floquet_operator");
    group.sample_size(10);
    for n in [4usize, 6, 8] {
        let schedule = random_model_b(n, 1).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &schedule, |b, s| {
            b.iter(|| FloquetSystem::new(black_box(s)).unwrap().floquet_operator())
        });
    }
    group.finish();
}

fn spectrum(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral_decomposition");
    group.sample_size(10);
    for n in [4usize, 6, 8] {
        let u = FloquetSystem::new(&random_model_b(n, 2).unwrap())
            .unwrap()
            .floquet_operator();
        group.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| {
            b.iter(|| {
                let d = spectral_decomposition(black_box(u), DEFAULT_CLUSTER_TOL).unwrap();
                degeneracy_metrics(&d, 1e-8).unwrap().d2
            })
        });
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("scalar_signal_m100_k16");
    group.sample_size(10);
    for n in [4usize, 6, 8] {
        let sys = FloquetSystem::new(&random_model_b(n, 3).unwrap()).unwrap();
        let d = spectral_decomposition(&sys.floquet_operator(), DEFAULT_CLUSTER_TOL).unwrap();
        let psi = sample_haar_product_state(n, &mut stream_rng(3, 0)).unwrap();
        let a = Observable::pauli_string(n, &[(1, Axis::Z)]).unwrap();
        let sampler = SignalSampler::new(&sys, &d, &psi, midpoint_grid(16)).unwrap();
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| sampler.scalar(&a, 100).unwrap())
        });
    }
    group.finish();
}

fn partial_trace(c: &mut Criterion) {
    let psi = sample_haar_product_state(10, &mut stream_rng(4, 0)).unwrap();
    c.bench_function("reduced_density_matrix_n10_l2", |b| {
        b.iter(|| reduced_density_matrix(black_box(&psi), &[1, 2]).unwrap())
    });
}

criterion_group!(benches, floquet, spectrum, sampling, partial_trace);
criterion_main!(benches);
