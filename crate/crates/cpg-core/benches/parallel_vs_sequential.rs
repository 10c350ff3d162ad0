use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cpg_core::builder::{self, CpgSpec, FixedWeights, PhaseSpec};
use cpg_core::table1;

fn spec(pfn: usize) -> CpgSpec {
    CpgSpec {
        phases: vec![
            PhaseSpec {
                duration_ms: 500.0,
                pfn_size: pfn,
                t_neuron_count: None,
            },
            PhaseSpec {
                duration_ms: 500.0,
                pfn_size: pfn,
                t_neuron_count: None,
            },
        ],
        motor_neuron_count: 25,
        tonic_frequency_default: 250.0,
        seed: 11,
    }
}

/// The parallel and sequential step kernels are feature-gated, so a single
/// binary cannot time both; instead this bench reports the simulation cost
/// under whichever feature set it was compiled with:
///   cargo bench -p cpg-core
///   cargo bench -p cpg-core --no-default-features
fn bench_simulation(c: &mut Criterion) {
    let mut group = c.benchmark_group(if cfg!(feature = "parallel") {
        "simulate/parallel"
    } else {
        "simulate/sequential"
    });
    group.sample_size(10);
    for pfn in [100usize, 300] {
        let s = spec(pfn);
        let w = FixedWeights::baseline(&s);
        let net = builder::build_with_weights(&s, &w).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(pfn), &net, |b, net| {
            b.iter(|| {
                net.run_driven(250.0, 200.0, table1::DEFAULT_DT_MS)
                    .unwrap()
                    .spike_times_ms
                    .len()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_simulation);
criterion_main!(benches);
