//! Criterion benchmarks for the hot paths: the closed-form Cramer-Wold
//! distance and its Monte-Carlo oracle, one training epoch, and the
//! evaluation metrics.

use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use cwsynth::cramer_wold::{cw_distance, cw_distance_mc, CwConfig};
use cwsynth::data::{CategoricalDataset, Column, DatasetSchema};
use cwsynth::linalg::Matrix;
use cwsynth::metrics::{adversarial_accuracy, kl_marginal, pcd, CorrKind};
use cwsynth::rng::SeedStream;
use cwsynth::trainer::{train_step1, Step1Config};

fn gaussian_cloud(n: usize, p: usize, seed: u64) -> Matrix {
    let mut rng = SeedStream::new(seed);
    Matrix::from_vec(n, p, (0..n * p).map(|_| rng.normal()).collect())
}

fn chain_dataset(n: usize, p: usize, levels: usize, seed: u64) -> CategoricalDataset {
    let cols = (0..p)
        .map(|j| Column {
            name: format!("c{j}"),
            levels: (0..levels).map(|l| format!("l{l}")).collect(),
        })
        .collect();
    let schema = Arc::new(DatasetSchema::new(cols).unwrap());
    let mut rng = SeedStream::new(seed);
    let mut rows = Vec::with_capacity(n * p);
    for _ in 0..n {
        let mut prev = rng.index(levels) as u32;
        rows.push(prev);
        for _ in 1..p {
            if rng.uniform() >= 0.7 {
                prev = rng.index(levels) as u32;
            }
            rows.push(prev);
        }
    }
    CategoricalDataset::new(schema, rows).unwrap()
}

fn bench_cramer_wold(c: &mut Criterion) {
    let mut group = c.benchmark_group("cramer_wold");
    for &(n, p) in &[(128usize, 30usize), (256, 231)] {
        let x = gaussian_cloud(n, p, 1);
        let y = gaussian_cloud(n, p, 2);
        let cfg = CwConfig::default();
        group.bench_with_input(
            BenchmarkId::new("closed_form", format!("n{n}_p{p}")),
            &(&x, &y),
            |b, (x, y)| b.iter(|| cw_distance(black_box(x), black_box(y), &cfg).unwrap()),
        );
    }
    let x = gaussian_cloud(64, 30, 3);
    let y = gaussian_cloud(64, 30, 4);
    let cfg = CwConfig {
        mc_projections: 1000,
        ..CwConfig::default()
    };
    group.bench_function("mc_oracle_1k_projections_n64_p30", |b| {
        b.iter(|| cw_distance_mc(black_box(&x), black_box(&y), &cfg).unwrap())
    });
    group.finish();
}

fn bench_training(c: &mut Criterion) {
    let ds = chain_dataset(1024, 10, 3, 5);
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("one_epoch_n1024_all_terms", |b| {
        b.iter(|| {
            let cfg = Step1Config {
                epochs: 1,
                batch_size: 256,
                hidden: vec![64, 64],
                lambda: 100.0,
                use_entropy_reg: true,
                seed: 7,
                ..Step1Config::default()
            };
            train_step1(black_box(&ds), None, None, &cfg).unwrap()
        })
    });
    group.finish();
}

fn bench_metrics(c: &mut Criterion) {
    let real = chain_dataset(2000, 10, 3, 8);
    let synth = chain_dataset(2000, 10, 3, 9);
    let test = chain_dataset(2000, 10, 3, 10);
    let mut group = c.benchmark_group("metrics");
    group.bench_function("kl_marginal_n2000", |b| {
        b.iter(|| kl_marginal(black_box(&real), black_box(&synth)).unwrap())
    });
    group.bench_function("pcd_kendall_n2000", |b| {
        b.iter(|| pcd(black_box(&real), black_box(&synth), CorrKind::Kendall).unwrap())
    });
    group.sample_size(10);
    group.bench_function("adversarial_accuracy_n2000", |b| {
        b.iter(|| {
            adversarial_accuracy(black_box(&real), black_box(&test), black_box(&synth), 1).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, bench_cramer_wold, bench_training, bench_metrics);
criterion_main!(benches);
