//! Benchmarks for the selection pipeline. Every benchmark id carries the
//! active execution mode, so `cargo bench` (parallel, the default) and
//! `cargo bench --no-default-features` (serial) land side by side in the
//! criterion report for comparison.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use topofilter::components::connected_components;
use topofilter::knn::{build_symmetric_graph, induce_class_subgraph, knn_search};
use topofilter::synth::MixtureComponent;
use topofilter::{
    inject_noise, sample_mixture, topo_cc_select, topo_filter_select, zeta_filter, Dataset,
    FilterParams, MixtureSpec, SearchStrategy, TransitionMatrix,
};

fn mode() -> &'static str {
    if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "serial"
    }
}

fn noisy_gaussians(n: usize) -> Dataset {
    let spec = MixtureSpec::new(vec![
        MixtureComponent {
            class: 0,
            weight: 0.5,
            mean: vec![-5.0, 0.0],
            cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        },
        MixtureComponent {
            class: 1,
            weight: 0.5,
            mean: vec![5.0, 0.0],
            cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        },
    ])
    .unwrap();
    let clean = sample_mixture(&spec, n, 17).unwrap();
    let truth = clean.true_labels().unwrap().to_vec();
    let transition = TransitionMatrix::uniform(2, 0.2).unwrap();
    let noisy = inject_noise(&truth, &transition, 18).unwrap();
    clean.with_noisy_labels(noisy).unwrap()
}

fn bench_knn(c: &mut Criterion) {
    let ds = noisy_gaussians(2000);
    let mut group = c.benchmark_group("knn_build");
    for (strategy, name) in [
        (SearchStrategy::KdTree, "kd_tree"),
        (SearchStrategy::BruteForce, "brute"),
    ] {
        group.bench_function(BenchmarkId::new(name, mode()), |b| {
            b.iter(|| knn_search(ds.features(), 32, None, None, strategy).unwrap())
        });
    }
    group.finish();
}

fn bench_components(c: &mut Criterion) {
    let ds = noisy_gaussians(4000);
    let table = knn_search(ds.features(), 32, None, None, SearchStrategy::Auto).unwrap();
    let graph = build_symmetric_graph(&table);
    let sub = induce_class_subgraph(&graph, ds.noisy_labels(), 0).unwrap();
    let mut group = c.benchmark_group("components");
    group.bench_function(BenchmarkId::new("union_find", mode()), |b| {
        b.iter(|| connected_components(&sub))
    });
    group.finish();
}

fn bench_selection(c: &mut Criterion) {
    let ds = noisy_gaussians(2000);
    let params = FilterParams {
        k_c: 24,
        k_o: 32,
        zeta: 0.75,
        milestone: 1,
        period: 1,
    };
    let pool = topo_cc_select(&ds, params.k_c).unwrap().kept;
    let mut group = c.benchmark_group("selection");
    group.sample_size(20);
    group.bench_function(BenchmarkId::new("topo_cc", mode()), |b| {
        b.iter(|| topo_cc_select(&ds, params.k_c).unwrap())
    });
    group.bench_function(BenchmarkId::new("vote_filter", mode()), |b| {
        b.iter(|| zeta_filter(&ds, &pool, params.k_o, params.zeta).unwrap())
    });
    group.bench_function(BenchmarkId::new("full_pipeline", mode()), |b| {
        b.iter(|| topo_filter_select(&ds, &params).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_knn, bench_components, bench_selection);
criterion_main!(benches);
