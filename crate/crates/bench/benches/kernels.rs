use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::Rng;

use tssort::graphs::{admissible_pairs, summary_of};
use tssort::harness::{draw_dataset, Dataset, NoiseModel, DEFAULT_MAX_DRAWS};
use tssort::{
    dynotears, h_dagness, is_stable, lasso_bic, marginal_variance, r2_scores, rng, simulate, sortability_score,
    sortnregress_ts, DynoConfig, GraphGenConfig, LassoConfig, OrderKind, OrderStrategy, PairMode, SimConfig,
    SummaryGraph,
};

fn dataset(d: usize, tau_max: usize, n: usize) -> Dataset {
    let gen = GraphGenConfig {
        d,
        d_c: 2.0,
        tau_max,
        ..Default::default()
    };
    draw_dataset(&gen, n, &NoiseModel::Unit, DEFAULT_MAX_DRAWS, &mut rng::seeded(1)).unwrap()
}

fn graphs(c: &mut Criterion) {
    let mut group = c.benchmark_group("graphs");
    for d in [10, 50, 200] {
        let mut r = rng::seeded(d as u64);
        let g = SummaryGraph::from_fn(d, |_, _| r.random_bool(2.0 / d as f64));
        let values: Vec<f64> = (0..d).map(|_| r.random()).collect();
        let cri = tssort::CriterionVector {
            kind: tssort::CriterionKind::Variance,
            values,
        };
        group.bench_with_input(BenchmarkId::new("admissible_pairs", d), &g, |b, g| {
            b.iter(|| admissible_pairs(black_box(g)))
        });
        group.bench_with_input(BenchmarkId::new("sortability_score", d), &g, |b, g| {
            b.iter(|| sortability_score(&cri, black_box(g), PairMode::Admissible))
        });
    }
    group.finish();
}

fn svar(c: &mut Criterion) {
    let ds = dataset(10, 3, 500);
    let mut group = c.benchmark_group("svar");
    group.bench_function("is_stable_d10_tau3", |b| b.iter(|| is_stable(black_box(&ds.graph))));
    let sim = SimConfig::new(500, 0);
    group.bench_function("simulate_d10_tau3_n500", |b| {
        b.iter(|| simulate(&ds.graph, &sim, &mut sim.rng()))
    });
    group.finish();
}

fn criteria(c: &mut Criterion) {
    let mut group = c.benchmark_group("criteria");
    for d in [10, 30] {
        let ds = dataset(d, 3, 1000);
        group.bench_with_input(BenchmarkId::new("marginal_variance", d), &ds, |b, ds| {
            b.iter(|| marginal_variance(black_box(&ds.panel)))
        });
        group.bench_with_input(BenchmarkId::new("r2_scores_tau3", d), &ds, |b, ds| {
            b.iter(|| r2_scores(black_box(&ds.panel), 3))
        });
        let g = summary_of(&ds.graph);
        let v = marginal_variance(&ds.panel);
        group.bench_with_input(BenchmarkId::new("score_summary", d), &g, |b, g| {
            b.iter(|| sortability_score(&v, g, PairMode::AllConnected))
        });
    }
    group.finish();
}

fn estimators(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimators");
    group.sample_size(10);

    let mut r = rng::seeded(3);
    let x = DMatrix::from_fn(500, 40, |_, _| r.random_range(-1.0..1.0));
    let y = x.column(0) * 2.0 - x.column(5) + x.column(17) * 0.5;
    group.bench_function("lasso_bic_500x40", |b| {
        b.iter(|| lasso_bic(black_box(&x), &y, &LassoConfig::default()))
    });

    for d in [5, 10] {
        let w = DMatrix::from_fn(d, d, |_, _| r.random_range(-1.0..1.0));
        group.bench_with_input(BenchmarkId::new("h_dagness", d), &w, |b, w| b.iter(|| h_dagness(black_box(w))));
    }

    let ds = dataset(10, 3, 500);
    group.bench_function("varsortnregress_d10_tau3", |b| {
        b.iter(|| sortnregress_ts(&ds.panel, 3, OrderStrategy::new(OrderKind::Variance)))
    });
    let small = dataset(5, 1, 1000);
    group.bench_function("dynotears_d5_tau1", |b| {
        b.iter(|| dynotears::fit(&small.panel, 1, &DynoConfig::default()))
    });
    group.finish();
}

criterion_group!(benches, graphs, svar, criteria, estimators);
criterion_main!(benches);
