#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::DMatrix;
use phaseid::connection::{DifferencedSeries, ReducedSensitivity};
use phaseid::feeder::{parse_feeder, FeederModel};
use phaseid::mmle::{prepare_series, IdentifyOptions};
use phaseid::sim::{generate, SimulationOutput, SimulationSpec};
use phaseid::slsq::SubproblemInstance;
use rand::Rng;

pub const FIXTURES: [&str; 4] = ["two_node", "four_load", "five_load", "feeder_8node"];

/// Fixtures small enough for exhaustive enumeration over all loads.
pub const SMALL_FIXTURES: [&str; 3] = ["two_node", "four_load", "five_load"];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.json"))
}

pub fn fixture(name: &str) -> FeederModel {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture readable");
    parse_feeder(&text).expect("fixture parses")
}

pub fn simulate(model: &FeederModel, noise: f64, samples: usize, seed: u64, quantize: bool) -> SimulationOutput {
    let spec = SimulationSpec {
        noise,
        samples,
        seed,
        quantize,
        ..Default::default()
    };
    generate(model, &spec).expect("simulation")
}

pub fn series(model: &FeederModel, out: &SimulationOutput) -> (DifferencedSeries, Vec<ReducedSensitivity>) {
    prepare_series(std::slice::from_ref(model), &out.readings, &IdentifyOptions::default()).expect("series")
}

/// Random regression instance with `others` free triples and `t` rows.
pub fn random_instance<R: Rng>(rng: &mut R, others: usize, t: usize) -> SubproblemInstance {
    let d = 3 * others;
    let design = DMatrix::from_fn(t, d, |_, _| rng.random_range(-1.0..1.0));
    let target = (0..t).map(|_| rng.random_range(-2.0..2.0)).collect();
    SubproblemInstance {
        m: 0,
        i: 0,
        target,
        design,
        others: (1..=others).collect(),
    }
}

/// Every phase code of `k` triples in lexicographic order.
pub fn all_phase_codes(k: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..3usize.pow(k as u32)).map(move |mut code| {
        let mut phases = vec![0; k];
        for slot in phases.iter_mut().rev() {
            *slot = code % 3;
            code /= 3;
        }
        phases
    })
}
