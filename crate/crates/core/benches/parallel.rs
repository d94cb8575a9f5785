//! Parallel core against a single worker.
//!
//! Each case runs inside a one-thread rayon pool and inside the default pool.
//! With `--no-default-features` the library's loops are plain iterators and
//! both variants measure the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mvport::backtest::{run_backtest, BacktestConfig};
use mvport::panel::{prepare_panel, PredictorSpec};
use mvport::solvers::{cross_validate, PenaltyKind};
use mvport::synth::{generate_panel, planted_regression, RegressionDesign, Scenario, SynthConfig};
use mvport::{Method, SolverConfig};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("1-thread", one), ("default", all)]
}

fn bench_cv(c: &mut Criterion) {
    let p = planted_regression(&RegressionDesign::new(500, 120, 5), 1).unwrap();
    let cfg = SolverConfig::default();
    let mut g = c.benchmark_group("lasso_cv_k500");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| cross_validate(&p.sample, &PenaltyKind::Lasso, &cfg).unwrap()))
        });
    }
    g.finish();
}

fn bench_prepare_and_backtest(c: &mut Criterion) {
    let cfg = SynthConfig {
        months: 72,
        firms: 300,
        characteristics: 12,
        ..SynthConfig::default()
    };
    let data = generate_panel(Scenario::PlantedSparse, 5, &cfg).unwrap();
    let spec = PredictorSpec::from_metadata(data.panel.names(), &data.metadata, true, true).unwrap();
    let prepared = prepare_panel(&data.panel, &spec, (0.01, 0.99), Some("size")).unwrap();
    let bt = BacktestConfig {
        window: 36,
        method: Method::Boosting,
        ..BacktestConfig::default()
    };

    let mut g = c.benchmark_group("prepare_panel");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| prepare_panel(&data.panel, &spec, (0.01, 0.99), Some("size")).unwrap()))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("backtest_boosting");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| run_backtest(&prepared, &bt).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_cv, bench_prepare_and_backtest);
criterion_main!(benches);
