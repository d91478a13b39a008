use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use phaseid::feeder::parse_feeder;
use phaseid::mmle::{exhaustive_minimizers, identify, prepare_series, IdentifyOptions};
use phaseid::sim::{generate, SimulationSpec};
use phaseid::Exec;

fn fixture(name: &str) -> phaseid::feeder::FeederModel {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.json"));
    parse_feeder(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn executors(c: &mut Criterion) {
    let model = fixture("feeder_8node");
    let spec = SimulationSpec { noise: 0.001, samples: 720, quantize: true, seed: 1, ..Default::default() };
    let out = generate(&model, &spec).unwrap();

    let mut group = c.benchmark_group("identify_8node_t720");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let opts = IdentifyOptions { exec, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &opts, |b, opts| {
            b.iter(|| identify(&model, &out.readings, opts).unwrap())
        });
    }
    group.finish();

    let small = fixture("five_load");
    let out = generate(&small, &SimulationSpec { samples: 720, seed: 1, ..Default::default() }).unwrap();
    let (ds, rs) = prepare_series(std::slice::from_ref(&small), &out.readings, &IdentifyOptions::default()).unwrap();
    let mut group = c.benchmark_group("oracle_five_load_t719");
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_function(format!("{exec:?}"), |b| b.iter(|| exhaustive_minimizers(&ds, &rs, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, executors);
criterion_main!(benches);
