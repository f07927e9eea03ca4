use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use netsync::apps::{leader_election, Flood};
use netsync::bfs::{complete_bfs, thresholded_bfs, Termination};
use netsync::cover::build_cover_sync;
use netsync::sim::AdversarySpec;
use netsync::synchronizer::alpha_synchronize;
use netsync::Family;
use netsync_bench::{graph, layered};

fn thresholded(c: &mut Criterion) {
    let mut group = c.benchmark_group("thresholded_bfs");
    for n in [64, 256] {
        let g = graph(Family::Grid, n);
        let cover = layered(&g, 10);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| thresholded_bfs(&g, &cover, 0, 3, &AdversarySpec::UniformRandom { seed: 1 }).unwrap())
        });
    }
    group.finish();
}

fn complete(c: &mut Criterion) {
    let mut group = c.benchmark_group("complete_bfs");
    group.sample_size(10);
    for n in [64, 128] {
        let g = graph(Family::Path, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| complete_bfs(&g, 0, Termination::Approach2, &AdversarySpec::MaxDelay).unwrap())
        });
    }
    group.finish();
}

fn synchronizers(c: &mut Criterion) {
    let mut group = c.benchmark_group("synchronizers");
    group.sample_size(10);
    let g = graph(Family::RandomConnected, 48);
    group.bench_function("alpha_flood", |b| b.iter(|| alpha_synchronize(&g, Flood::for_graph(&g, &[0]), &AdversarySpec::MaxDelay).unwrap()));
    group.bench_function("leader_election", |b| b.iter(|| leader_election(&g, &AdversarySpec::edge_biased(2)).unwrap()));
    group.finish();
}

fn covers(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_cover_sync");
    for n in [64, 256] {
        let g = graph(Family::RandomConnected, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| build_cover_sync(&g, 4).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, thresholded, complete, synchronizers, covers);
criterion_main!(benches);
