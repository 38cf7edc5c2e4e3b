//! Runs the parallel paths on the global rayon pool and on a one-thread pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use derivkit::baselines::{best_tuned_over, Baseline};
use derivkit::dictionary::{train_dictionary, DictKey, TrainingConfig};
use derivkit::estimator::{sliding_estimate, Estimator};
use derivkit::synth::make_benchmark_case;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let global = rayon::current_num_threads();
    vec![
        ("parallel", rayon::ThreadPoolBuilder::new().num_threads(global).build().unwrap()),
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
    ]
}

fn bench(c: &mut Criterion) {
    let dict = train_dictionary(&TrainingConfig::mini(), 3).unwrap();
    let case = make_benchmark_case(dict.grid(), 0.5, 0.05, 2000, 4, 0).unwrap();
    let map = dict.get(DictKey::new(10, 5, 2)).unwrap();
    let estimator = Estimator::new(&dict);
    let savgol = Baseline::Savgol.grid(4).unwrap();

    let mut group = c.benchmark_group("parallel_vs_sequential");
    group.sample_size(20);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("sliding_estimate", name), |b| {
            pool.install(|| b.iter(|| sliding_estimate(&case.noisy, map).unwrap()))
        });
        group.bench_function(BenchmarkId::new("est_deriv", name), |b| {
            pool.install(|| b.iter(|| estimator.est_deriv(&case.noisy, 2, 1.0, None).unwrap()))
        });
        group.bench_function(BenchmarkId::new("savgol_best_tuned", name), |b| {
            pool.install(|| b.iter(|| best_tuned_over(&savgol, &case, &[1, 2])))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
