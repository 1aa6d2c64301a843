use anonsat::analysis::sweep;
use anonsat::geodata::{build_graph, generate_synthetic, largest_component};
use anonsat::{run_simulation, GatewayGraph, ProtocolConfig, SimConfig, SyntheticKind};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn graph() -> GatewayGraph {
    let d = generate_synthetic(SyntheticKind::Uniform, 200, 20_000.0, 2);
    largest_component(&build_graph(&d, &SimConfig::default().profile))
}

fn simulate(c: &mut Criterion) {
    let g = graph();
    let mut group = c.benchmark_group("run_simulation");
    group.sample_size(10);
    for clients in [1, 10, 50] {
        let cfg = SimConfig { client_count: clients, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(clients), &cfg, |b, cfg| {
            b.iter(|| run_simulation(black_box(&g), cfg, 0).unwrap())
        });
    }
    group.finish();
}

fn distance(c: &mut Criterion) {
    let g = graph();
    let cfg = ProtocolConfig::default();
    c.bench_function("distance_sweep_0_to_5", |b| {
        b.iter(|| sweep(black_box(&g), &[0, 1, 2, 3, 4, 5], 10_000, 0, &cfg).unwrap())
    });
}

criterion_group!(benches, simulate, distance);
criterion_main!(benches);
