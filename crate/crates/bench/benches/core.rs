use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dsnbench_bench::{posts, world};
use dsnbench_core::analytics::{efd_segment_expectation, SegmentMethod};
use dsnbench_core::channels::{feed_parse, feed_render};
use dsnbench_core::{run_simulation, FittedModel, SimConfig, Timestamp};

fn quadrature(c: &mut Criterion) {
    let model = FittedModel::baseline();
    let mut g = c.benchmark_group("efd_segment");
    for h in [60.0, 600.0, 3600.0] {
        g.bench_with_input(BenchmarkId::new("quadrature", h), &h, |b, &h| {
            b.iter(|| efd_segment_expectation(black_box(h), &model, SegmentMethod::Quadrature).unwrap())
        });
    }
    g.finish();
}

fn feed(c: &mut Criterion) {
    let msgs = posts(100);
    let bytes = feed_render(&msgs, "u00001", 100);
    c.bench_function("feed_render_100", |b| b.iter(|| feed_render(black_box(&msgs), "u00001", 100)));
    c.bench_function("feed_parse_100", |b| b.iter(|| feed_parse(black_box(&bytes)).unwrap()));
}

fn virtual_run(c: &mut Criterion) {
    let (topo, trace) = world(200, 200);
    let cfg = SimConfig::new(Timestamp::from_secs(300), 1);
    let mut g = c.benchmark_group("virtual_run");
    g.sample_size(10);
    g.bench_function("200_bots_200_roots", |b| b.iter(|| run_simulation(&trace, &topo, &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, quadrature, feed, virtual_run);
criterion_main!(benches);
