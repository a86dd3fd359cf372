use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

use fxres_core::clustering::kmeans;
use fxres_core::fgls::FglsOptions;
use fxres_core::montecarlo::interaction_monte_carlo;
use fxres_core::spvar::{estimate_varx, uhlig_sign_irf, SignOptions, SignSpec, VarxOptions};
use fxres_core::synth::{simulate_var, InteractionDgp};
use fxres_core::{rng, Execution};
use nalgebra::DMatrix;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_kmeans(c: &mut Criterion) {
    let mut r = rng::rng_from(1);
    let pts: Vec<Vec<f64>> = (0..400).map(|_| (0..8).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
    let mut g = c.benchmark_group("kmeans_restarts");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| kmeans(black_box(&pts), 2, 7, 64, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_monte_carlo(c: &mut Criterion) {
    let dgp = InteractionDgp::standard(10, 40);
    let mut g = c.benchmark_group("fgls_monte_carlo");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| interaction_monte_carlo(black_box(&dgp), 16, 3, 0.0, 0.5, FglsOptions::default(), exec))
        });
    }
    g.finish();
}

fn bench_sign_draws(c: &mut Criterion) {
    let a = vec![DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.2, 0.3])];
    let b0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.6, 0.8]);
    let y = simulate_var(&a, &b0, 1000, 100, &mut rng::rng_from(2));
    let model = estimate_varx("B", &y, None, VarxOptions::default()).unwrap();
    let spec = SignSpec::capital_flow_fx();
    let mut g = c.benchmark_group("sign_draws");
    for (name, exec) in MODES {
        let opts = SignOptions { draws: 2000, seed: 4, posterior: true, exec, ..SignOptions::default() };
        g.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| uhlig_sign_irf(black_box(&model), &spec, opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_kmeans, bench_monte_carlo, bench_sign_draws);
criterion_main!(benches);
