use std::hint::black_box;
use std::path::Path;

use adage::community::kmeans;
use adage::graph::{generate_sbm, SbmParams};
use adage::harness::{run, ExperimentConfig};
use adage::model::init_encoder;
use adage::par::Exec;
use adage::seed;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const PATHS: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn propagation(c: &mut Criterion) {
    let g = generate_sbm(&SbmParams::new(5000, 5, 0.004, 0.0004, 128, 2.0), 1).unwrap();
    let enc = init_encoder(128, 32, 2, &mut seed::rng(2));
    let mut group = c.benchmark_group("propagate_and_encode");
    for (name, exec) in PATHS {
        group.bench_function(BenchmarkId::new("propagate", name), |b| {
            b.iter(|| black_box(g.adjacency().propagate(g.features().view(), 2, exec)))
        });
        group.bench_function(BenchmarkId::new("encode", name), |b| {
            b.iter(|| black_box(enc.encode(&g, exec).unwrap()))
        });
    }
    group.finish();
}

fn clustering(c: &mut Criterion) {
    let g = generate_sbm(&SbmParams::new(4000, 8, 0.01, 0.001, 32, 3.0), 3).unwrap();
    let mut group = c.benchmark_group("kmeans");
    group.sample_size(10);
    for (name, exec) in PATHS {
        group.bench_function(name, |b| {
            b.iter(|| black_box(kmeans(g.features().view(), 50, 4, exec).unwrap()))
        });
    }
    group.finish();
}

fn trials(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "graph.n=450\ntrials=4\nattack.setups=B\ndefense.modes=adage\nartifacts=false\noutput={}",
        dir.path().display()
    );
    let base = ExperimentConfig::parse(&text, Path::new("bench")).unwrap();
    let mut group = c.benchmark_group("experiment_trials");
    group.sample_size(10);
    for (name, parallel) in [("sequential", false), ("parallel", true)] {
        let cfg = ExperimentConfig {
            parallel,
            ..base.clone()
        };
        group.bench_function(name, |b| b.iter(|| black_box(run(&cfg).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, propagation, clustering, trials);
criterion_main!(benches);
