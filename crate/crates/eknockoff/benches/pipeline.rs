//! Benchmarks comparing the rayon-parallel pipeline against the sequential
//! fallback. Build with the default features to get the parallel variants;
//! with `--no-default-features` both sides run the sequential code.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use eknockoff::data::{DataMatrix, ResponseVector};
use eknockoff::knockoffs::KnockoffSampler;
use eknockoff::predictors::{lasso_fit, PredictorSpec};
use eknockoff::selection::Targets;
use eknockoff::sim::{
    ar_covariance, run_experiment, run_experiment_sequential, ExperimentConfig, Method,
};
use eknockoff::stats::{error_importance, error_importance_sequential, TieRule};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn bench_experiment(c: &mut Criterion) {
    let cfg = ExperimentConfig {
        n: 400,
        p: 20,
        s0_size: 5,
        split_n1: 200,
        split_n2: 200,
        predictor: PredictorSpec::lasso_fixed(0.02),
        method: Method::Fdp,
        targets: Targets {
            q: Some(0.2),
            alpha: Some(0.2),
            k: None,
        },
        trials: 16,
        master_seed: 1,
        ..ExperimentConfig::default()
    };
    let mut group = c.benchmark_group("run_experiment_16_trials");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| run_experiment(black_box(&cfg)).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| run_experiment_sequential(black_box(&cfg)).unwrap())
    });
    group.finish();
}

fn bench_importance(c: &mut Criterion) {
    let p = 200;
    let n1 = 300;
    let n2 = 500;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x1: DMatrix<f64> =
        DMatrix::from_row_iterator(n1, p, (0..n1 * p).map(|_| rng.sample(StandardNormal)));
    let beta = DVector::from_fn(p, |j, _| if j < 10 { 0.5 } else { 0.0 });
    let y1 = &x1 * &beta;
    let fitted = lasso_fit(
        &DataMatrix::new(x1).unwrap(),
        &ResponseVector::new(y1).unwrap(),
        0.02,
    )
    .unwrap();

    let model = ar_covariance(p, 0.5).unwrap();
    let s = model.equicorrelated_s().unwrap();
    let sampler = KnockoffSampler::new(model, s).unwrap();
    let x2: DMatrix<f64> =
        DMatrix::from_row_iterator(n2, p, (0..n2 * p).map(|_| rng.sample(StandardNormal)));
    let x2 = DataMatrix::new(x2).unwrap();
    let y2 = ResponseVector::new(DVector::from_fn(n2, |i, _| (i as f64 * 0.1).sin())).unwrap();
    let knock = sampler.sample(&x2, &mut rng).unwrap();

    let mut group = c.benchmark_group("error_importance_p200");
    group.bench_function("parallel", |b| {
        b.iter(|| {
            let mut r = ChaCha8Rng::seed_from_u64(9);
            error_importance(
                black_box(&fitted),
                black_box(&x2),
                &y2,
                &knock,
                TieRule::default(),
                &mut r,
            )
            .unwrap()
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let mut r = ChaCha8Rng::seed_from_u64(9);
            error_importance_sequential(
                black_box(&fitted),
                black_box(&x2),
                &y2,
                &knock,
                TieRule::default(),
                &mut r,
            )
            .unwrap()
        })
    });
    group.finish();
}

fn bench_sampling(c: &mut Criterion) {
    let p = 100;
    let n = 2000;
    let model = ar_covariance(p, 0.5).unwrap();
    let s = model.equicorrelated_s().unwrap();
    let sampler = KnockoffSampler::new(model, s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: DMatrix<f64> =
        DMatrix::from_row_iterator(n, p, (0..n * p).map(|_| rng.sample(StandardNormal)));
    let x = DataMatrix::new(x).unwrap();
    c.bench_function("sample_knockoffs_2000x100", |b| {
        b.iter(|| {
            let mut r = ChaCha8Rng::seed_from_u64(4);
            sampler.sample(black_box(&x), &mut r).unwrap()
        })
    });
}

criterion_group!(benches, bench_experiment, bench_importance, bench_sampling);
criterion_main!(benches);
