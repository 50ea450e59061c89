use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use xbarsim::network::{
    map_network, Activation, CircuitSetup, Fidelity, LayerSpec, NonIdealNetwork, PreparedNetwork,
};
use xbarsim::neuron::RgcParams;
use xbarsim::variability::{run_mc, McConfig, MismatchSpec};
use xbarsim::Exec;

fn strategies() -> [(&'static str, Exec); 2] {
    [
        ("sequential", Exec::Sequential),
        ("parallel", Exec::Parallel),
    ]
}

fn monte_carlo(c: &mut Criterion) {
    let nominal = RgcParams::reference();
    let spec = MismatchSpec::default();
    let mut group = c.benchmark_group("monte_carlo_200");
    group.sample_size(10);
    for (name, exec) in strategies() {
        let mut cfg = McConfig::new(200, 1, 0.65);
        cfg.exec = exec;
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_mc(&nominal, &spec, &cfg).unwrap())
        });
    }
    group.finish();
}

fn weights(n_in: usize, n_out: usize, salt: usize) -> Vec<Vec<f64>> {
    (0..n_in)
        .map(|i| {
            (0..n_out)
                .map(|j| (((i * 7 + j * 13 + salt) % 17) as f64 - 8.0) / 8.0)
                .collect()
        })
        .collect()
}

fn batch_inference(c: &mut Criterion) {
    let layers = vec![
        LayerSpec::new(weights(8, 8, 1), Activation::Threshold { threshold: 0.0 }).unwrap(),
        LayerSpec::new(weights(8, 4, 5), Activation::Threshold { threshold: 0.0 }).unwrap(),
    ];
    let mapped = map_network(&layers, 8, 10e-9, 1e-6).unwrap();
    let net = PreparedNetwork::new(
        mapped,
        Fidelity::CircuitNonIdeal(NonIdealNetwork::default()),
        CircuitSetup::default(),
    )
    .unwrap();
    let inputs: Vec<Vec<f64>> = (0..64)
        .map(|k| {
            (0..8)
                .map(|i| (((k * 31 + i * 11) % 21) as f64 - 10.0) / 10.0)
                .collect()
        })
        .collect();
    let mut group = c.benchmark_group("nonideal_inference_64");
    group.sample_size(10);
    for (name, exec) in strategies() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| net.infer_batch(&inputs, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, batch_inference);
criterion_main!(benches);
