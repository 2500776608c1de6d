// SPDX-License-Identifier: Apache-2.0

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use procnet::communities::{louvain, LineGraph};
use procnet::core_periphery::{core_membership, weighted_core_numbers};
use procnet::graph::robins_alexander_clustering;
use procnet::nullmodel::{null_distribution, CoreSbRate, GlobalSbRate, NullConfig, NullEngine};
use procnet_bench::market;

fn peeling(c: &mut Criterion) {
    let g = market(1.0, 1);
    c.bench_function("weighted_core_numbers/100k", |b| b.iter(|| weighted_core_numbers(black_box(&g))));
}

fn clustering(c: &mut Criterion) {
    let g = market(0.1, 2);
    c.bench_function("robins_alexander/10k", |b| b.iter(|| robins_alexander_clustering(black_box(&g))));
}

fn link_communities(c: &mut Criterion) {
    let g = market(0.1, 3);
    let lg = LineGraph::build(&g).unwrap();
    let mut group = c.benchmark_group("link_communities/10k");
    group.sample_size(10);
    group.bench_function("line_graph", |b| b.iter(|| LineGraph::build(black_box(&g)).unwrap()));
    group.bench_function("louvain", |b| b.iter(|| louvain(black_box(&lg), 7)));
    group.finish();
}

fn null_model(c: &mut Criterion) {
    let g = market(1.0, 4);
    let engine = NullEngine::new(&g, 5);
    let partition = core_membership(&g, &weighted_core_numbers(&g));
    let stat = CoreSbRate::new(&g, &partition);
    let mut group = c.benchmark_group("null/100k");
    group.sample_size(10);
    group.bench_function("replicate", |b| {
        let mut i = 0;
        b.iter(|| {
            i += 1;
            engine.replicate(i)
        })
    });
    group.bench_function("core_sb_100_reps", |b| {
        b.iter(|| null_distribution(&stat, &g, NullConfig::new(100, 5)).unwrap())
    });
    group.bench_function("global_sb_100_reps", |b| {
        b.iter(|| null_distribution(&GlobalSbRate, &g, NullConfig::new(100, 5)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, peeling, clustering, link_communities, null_model);
criterion_main!(benches);
