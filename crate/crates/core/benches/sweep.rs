use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use htf_mmc::admittance::{sweep, Model};
use htf_mmc::parallel::Execution;
use htf_mmc::params::{CircuitParams, ControlMode, ControlParams, ConverterKind, ModelSpec};
use htf_mmc::sim::{steady_opoint, Dynamics, SimOptions};

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn bench_sweep(c: &mut Criterion) {
    let circuit = CircuitParams::reference();
    let control = ControlParams::reference();
    let (converter, mode) = (ConverterKind::Mmc, ControlMode::GflPq);
    let dynamics = Dynamics::new(&circuit, &control, converter, mode).unwrap();
    let (_, op) = steady_opoint(&dynamics, &SimOptions::default()).unwrap();
    let freqs = log_grid(5.0, 1000.0, 200);

    let mut group = c.benchmark_group("sweep_200");
    group.sample_size(20);
    for h in [3, 5] {
        let spec = ModelSpec::new(converter, mode).with_h(h);
        let model = Model::new(circuit.clone(), control.clone(), spec).unwrap();
        for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            if exec == Execution::Parallel && !Execution::parallel_available() {
                continue;
            }
            group.bench_with_input(BenchmarkId::new(name, format!("h{h}")), &freqs, |b, f| {
                b.iter(|| sweep(&model, &op, black_box(f), exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
