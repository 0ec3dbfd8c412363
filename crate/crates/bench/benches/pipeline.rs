use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use odediscover_core::basis;
use odediscover_core::denoise::{iter_psdn, psdn, DenoiseConfig};
use odediscover_core::operators::{Projector, TrapezoidMatrix, DEFAULT_RANK_TOL};
use odediscover_core::regression::{
    gamma_theory, initial_derivative, irw_socp, smoothing_radius, IrwOptions, RegressionContext,
};
use odediscover_core::systems::{add_noise, builtin_system, simulate, Trajectory};

fn duffing_noisy(n: usize) -> (odediscover_core::OdeSystem, Trajectory) {
    let sys = builtin_system("duffing_ps2").unwrap();
    let clean = simulate(&sys, sys.default_ic.as_slice(), 10.0, n).unwrap();
    let noisy = add_noise(&clean, 0.1, 1).unwrap();
    (sys, noisy)
}

fn bench_library_eval(c: &mut Criterion) {
    let mut group = c.benchmark_group("library_eval");
    for n in [500usize, 2000] {
        let (sys, noisy) = duffing_noisy(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| basis::evaluate_library(&sys.basis, black_box(&noisy)).unwrap())
        });
    }
    group.finish();
}

fn bench_projector(c: &mut Criterion) {
    let mut group = c.benchmark_group("integrated_library_projector");
    for n in [500usize, 2000] {
        let (sys, noisy) = duffing_noisy(n);
        let theta = basis::evaluate_library(&sys.basis, &noisy).unwrap();
        let t = TrapezoidMatrix::new(n, 10.0).unwrap();
        let phi = basis::build_phi(&theta, &t).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| Projector::from_matrix(black_box(&phi), DEFAULT_RANK_TOL))
        });
    }
    group.finish();
}

fn bench_psdn(c: &mut Criterion) {
    let mut group = c.benchmark_group("denoise");
    group.sample_size(10);
    let (sys, noisy) = duffing_noisy(1000);
    group.bench_function("psdn_1000", |b| {
        b.iter(|| psdn(black_box(&noisy), &sys.basis, 0.1, true).unwrap())
    });
    let cfg = DenoiseConfig {
        check_diverg: true,
        sigma_per_state: Some(vec![0.1, 0.1]),
        max_iters: 50,
        conv_tol: 1e-8,
        ..DenoiseConfig::default()
    };
    group.bench_function("iter_psdn_50_passes_1000", |b| {
        b.iter(|| iter_psdn(black_box(&noisy), &sys.basis, &cfg).unwrap())
    });
    group.finish();
}

fn bench_socp(c: &mut Criterion) {
    let mut group = c.benchmark_group("cone_program");
    group.sample_size(10);
    for n in [500usize, 1000] {
        let (sys, noisy) = duffing_noisy(n);
        let cfg = DenoiseConfig {
            check_diverg: true,
            sigma_per_state: Some(vec![0.1, 0.1]),
            max_iters: 500,
            ..DenoiseConfig::default()
        };
        let den = iter_psdn(&noisy, &sys.basis, &cfg).unwrap().denoised;
        let theta = basis::evaluate_library(&sys.basis, &den).unwrap();
        let ctx = RegressionContext::new(theta, 10.0, None).unwrap();
        let u = den.state_column(1);
        let init = initial_derivative(&ctx.theta_tilde, &ctx.phi_tilde, &u).unwrap();
        let c_rad = smoothing_radius(&ctx.difference, &init.derivative).unwrap();
        let gamma = gamma_theory(0.1, sys.basis.len());
        group.bench_with_input(BenchmarkId::new("irw_two_passes", n), &n, |b, _| {
            b.iter(|| {
                irw_socp(black_box(&ctx), &u, &[gamma], c_rad, &IrwOptions::default()).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_library_eval,
    bench_projector,
    bench_psdn,
    bench_socp
);
criterion_main!(benches);
