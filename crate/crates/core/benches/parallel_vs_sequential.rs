//! Blend fitting and the LOOCV pipeline on one worker versus the default
//! pool. Build with `--no-default-features` to time the sequential fallback
//! instead of rayon.

use chrono::NaiveDate;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use onsetblend::bins::Bin;
use onsetblend::blend::{fit_blend, FeatureRow};
use onsetblend::pipeline::{run_pipeline, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn rows(n: usize) -> Vec<FeatureRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|_| {
            let mut v = || -> [f64; 4] { std::array::from_fn(|_| StandardNormal.sample(&mut rng)) };
            let (pi, alpha, nu, beta, mu) = (v(), v(), v(), v(), v());
            let k = if alpha[0] + pi[1] > 0.5 { 0 } else { rng.gen_range(0..5) };
            FeatureRow {
                grid_id: "g".into(),
                init_date: NaiveDate::from_ymd_opt(2000, 6, 1).unwrap(),
                pi,
                alpha,
                nu,
                beta,
                mu,
                outcome: Some(Bin::from_index(k)),
            }
        })
        .collect()
}

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let default = rayon::current_num_threads();
    let mut counts = vec![1];
    if default > 1 {
        counts.push(default);
    }
    counts
        .into_iter()
        .map(|n| (format!("{n}-thread"), rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()))
        .collect()
}

fn bench_blend(c: &mut Criterion) {
    let data = rows(20_000);
    let mut g = c.benchmark_group("fit_blend_20k");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| pool.install(|| fit_blend(&data, 1e-6).unwrap()))
        });
    }
    g.finish();
}

fn bench_pipeline(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig { out_dir: dir.path().to_path_buf(), ..RunConfig::default() };
    cfg.set("n_years", "12").unwrap();
    let mut g = c.benchmark_group("loocv_pipeline_12y");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&name), |b| {
            b.iter(|| pool.install(|| run_pipeline(&cfg).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_blend, bench_pipeline);
criterion_main!(benches);
