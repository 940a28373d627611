use std::hint::black_box;

use consensus_core::dynamics::{simulate_fixed, SimOptions};
use consensus_core::exec::{derive_seed, map_indexed, stream_rng, Execution};
use consensus_core::protocol::ClassAFunction;
use consensus_core::switching::{estimate_expected_eta_with, BlinkingModel};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

fn backends() -> Vec<Execution> {
    let mut out = vec![Execution::Sequential];
    #[cfg(feature = "parallel")]
    out.push(Execution::Parallel);
    out
}

fn expected_eta(c: &mut Criterion) {
    let model = BlinkingModel::new(50, 0, 0.1, 0.1).unwrap();
    let mut group = c.benchmark_group("expected_eta_blinking50");
    group.sample_size(10);
    for exec in backends() {
        group.bench_with_input(
            BenchmarkId::from_parameter(exec.name()),
            &exec,
            |b, &exec| {
                b.iter(|| estimate_expected_eta_with(exec, &model, 1_000, black_box(7)).unwrap())
            },
        );
    }
    group.finish();
}

fn fixed_batch(c: &mut Criterion) {
    let g = ClassAFunction::preset("unit-jump").unwrap();
    let model = BlinkingModel::new(20, 1, 0.2, 0.5).unwrap();
    let opts = SimOptions {
        t_max: 5.0,
        output_stride: 1000,
        ..SimOptions::default()
    };
    let mut group = c.benchmark_group("fixed_runs_x32");
    group.sample_size(10);
    for exec in backends() {
        group.bench_with_input(
            BenchmarkId::from_parameter(exec.name()),
            &exec,
            |b, &exec| {
                b.iter(|| {
                    map_indexed(exec, 32, |i| {
                        let mut rng = stream_rng(derive_seed(11, i as u64), 0);
                        let graph = consensus_core::switching::sample_blinking(&model, &mut rng);
                        let x0: Vec<f64> = (0..20).map(|_| rng.random_range(-5.0..5.0)).collect();
                        simulate_fixed(&graph, &g, &x0, &opts)
                            .unwrap()
                            .summary
                            .final_spread
                    })
                })
            },
        );
    }
    group.finish();
}

criterion_group!(benches, expected_eta, fixed_batch);
criterion_main!(benches);
