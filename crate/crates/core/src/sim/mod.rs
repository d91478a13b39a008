//! Synthetic measurement generation: load profiles, linear or nonlinear
//! network response, meter noise, quantization and partial metering.

mod noise;
mod perturb;
mod profiles;

pub use noise::{gaussian, noise_sigma, quantize, reactive_ratio};
pub use perturb::perturb_model;
pub use profiles::{read_profiles_csv, reactive_from_power_factor, synthetic_real_power, Profiles, SyntheticProfile};

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, TimeDelta, Utc};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::connection::{balanced_pair_magnitude, MeterReadings};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::feeder::{BranchReduction, FeederModel, ReducedNetwork};
use crate::linear_pf::{balanced, PowerFlowSolver};
use crate::mmle::prepare_model;
use crate::phase::{ConnectionClass, PhaseLabel};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    #[default]
    Linear,
    Nonlinear,
}

/// Where voltage noise enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    /// Independent noise on every sample-to-sample change.
    Increment,
    /// Independent noise on every reading.
    Reading,
}

impl SimMode {
    pub fn default_noise_model(self) -> NoiseModel {
        match self {
            SimMode::Linear => NoiseModel::Increment,
            SimMode::Nonlinear => NoiseModel::Reading,
        }
    }
}

macro_rules! lowercase_enum_text {
    ($ty:ty, $($variant:path => $text:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($text => Ok($variant),)+
                    other => Err(Error::Schema(format!("unknown value `{other}`"))),
                }
            }
        }
    };
}

lowercase_enum_text!(SimMode, SimMode::Linear => "linear", SimMode::Nonlinear => "nonlinear");
lowercase_enum_text!(NoiseModel, NoiseModel::Increment => "increment", NoiseModel::Reading => "reading");

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSource {
    Synthetic(SyntheticProfile),
    /// Real-power consumption in kW, `[load][time]`, in feeder load order.
    Given(Vec<Vec<f64>>),
}

/// Substation voltage magnitudes in per unit:
/// `level + daily * sin(2 pi t / 24) + common(t) + own_i(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstationProfile {
    pub level: f64,
    pub daily: f64,
    /// Standard deviation of the variation shared by the three phases.
    pub common: f64,
    /// Standard deviation of each phase's own variation.
    pub per_phase: f64,
}

impl Default for SubstationProfile {
    fn default() -> Self {
        Self {
            level: 1.02,
            daily: 0.008,
            common: 0.002,
            per_phase: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub mode: SimMode,
    /// Number of raw samples.
    pub samples: usize,
    pub profiles: ProfileSource,
    pub substation: SubstationProfile,
    /// Meter accuracy class: three-sigma noise as a fraction of nominal.
    pub noise: f64,
    /// `None` picks the mode's default.
    pub noise_model: Option<NoiseModel>,
    pub quantize: bool,
    pub primary_voltage_step_v: f64,
    pub secondary_voltage_step_v: f64,
    pub power_step_kw: f64,
    /// Fraction of loads that report measurements.
    pub penetration: f64,
    pub seed: u64,
    pub start: DateTime<Utc>,
    pub interval: TimeDelta,
    /// Connections to simulate; defaults to the labels in the feeder file.
    pub truth: Option<BTreeMap<String, PhaseLabel>>,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            mode: SimMode::Linear,
            samples: 2160,
            profiles: ProfileSource::Synthetic(SyntheticProfile::default()),
            substation: SubstationProfile::default(),
            noise: 0.0,
            noise_model: None,
            quantize: false,
            primary_voltage_step_v: 1.0,
            secondary_voltage_step_v: 0.1,
            power_step_kw: 0.1,
            penetration: 1.0,
            seed: 0,
            start: DateTime::from_timestamp(1_577_836_800, 0).expect("valid epoch"),
            interval: TimeDelta::hours(1),
            truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub readings: MeterReadings,
    /// True connection of every load, metered or not.
    pub truth: BTreeMap<String, PhaseLabel>,
    /// Ids of the metered loads, in feeder order.
    pub metered: Vec<String>,
    /// Voltage noise added to each metered load, per unit,
    /// `[metered load][time]`. Linear mode adds it to the equivalent
    /// primary-side magnitude, nonlinear mode to the meter reading.
    pub voltage_noise: Vec<Vec<f64>>,
}

impl SimulationOutput {
    pub fn truth_json(&self) -> Result<String> {
        let map: BTreeMap<&str, String> = self.truth.iter().map(|(k, v)| (k.as_str(), v.to_string())).collect();
        Ok(serde_json::to_string_pretty(&map)?)
    }
}

/// Independent random streams of one seed.
#[derive(Clone, Copy)]
enum Stream {
    Profiles = 1,
    PowerFactor,
    Substation,
    PowerNoise,
    VoltageNoise,
    Penetration,
}

fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream as u64);
    r
}

pub fn parse_truth_json(text: &str) -> Result<BTreeMap<String, PhaseLabel>> {
    let raw: BTreeMap<String, String> = serde_json::from_str(text)?;
    raw.into_iter()
        .map(|(k, v)| Ok((k, v.parse::<PhaseLabel>()?)))
        .collect()
}

fn resolve_truth(net: &ReducedNetwork, spec: &SimulationSpec) -> Result<Vec<usize>> {
    net.loads
        .iter()
        .map(|l| {
            let label = spec
                .truth
                .as_ref()
                .and_then(|t| t.get(&l.id).copied())
                .or(l.phase)
                .ok_or_else(|| Error::Simulation(format!("no true connection for load `{}`", l.id)))?;
            if !label.fits(l.class) {
                return Err(Error::InvalidLoad {
                    id: l.id.clone(),
                    reason: format!("label {label} does not fit class {}", l.class),
                });
            }
            Ok(label.index())
        })
        .collect()
}

fn check_spec(spec: &SimulationSpec) -> Result<()> {
    if !(spec.penetration > 0.0 && spec.penetration <= 1.0) {
        return Err(Error::Simulation(format!("penetration {} outside (0, 1]", spec.penetration)));
    }
    if !(spec.noise >= 0.0) {
        return Err(Error::Simulation(format!("noise class {} is negative", spec.noise)));
    }
    if spec.samples < 2 {
        return Err(Error::Simulation("at least two samples are needed".into()));
    }
    Ok(())
}

/// Substation magnitudes `[a, b, c, ab, bc, ca][t]` in per unit.
fn substation_series(spec: &SimulationSpec) -> [Vec<f64>; 6] {
    let mut r = rng(spec.seed, Stream::Substation);
    let sp = spec.substation;
    let mut out: [Vec<f64>; 6] = std::array::from_fn(|_| Vec::with_capacity(spec.samples));
    for t in 0..spec.samples {
        let base = sp.level + sp.daily * (2.0 * PI * t as f64 / 24.0).sin() + gaussian(&mut r, sp.common);
        let v: [f64; 3] = std::array::from_fn(|_| base + gaussian(&mut r, sp.per_phase));
        for i in 0..3 {
            out[i].push(v[i]);
            out[3 + i].push(balanced_pair_magnitude(v[i], v[(i + 1) % 3]));
        }
    }
    out
}

fn consumption_profiles(model: &FeederModel, spec: &SimulationSpec) -> Result<Profiles> {
    let m = model.loads.len();
    let p_kw = match &spec.profiles {
        ProfileSource::Synthetic(shape) => synthetic_real_power(&mut rng(spec.seed, Stream::Profiles), m, spec.samples, shape),
        ProfileSource::Given(p) => {
            if p.len() != m || p.iter().any(|s| s.len() < spec.samples) {
                return Err(Error::Simulation(format!(
                    "profiles for {} loads, feeder has {m}; {} samples needed",
                    p.len(),
                    spec.samples
                )));
            }
            p.iter().map(|s| s[..spec.samples].to_vec()).collect()
        }
    };
    let q_kvar = reactive_from_power_factor(&mut rng(spec.seed, Stream::PowerFactor), &p_kw);
    Ok(Profiles { p_kw, q_kvar })
}

/// Wye port currents of one load for the nonlinear solve, plus the meter
/// voltage magnitude at the returned point.
struct LoadPort {
    node: usize,
    class: ConnectionClass,
    phase: usize,
    reduction: Option<BranchReduction>,
    /// Meter-side phasor of the last evaluation (branch loads only).
    meter: Option<Complex64>,
}

impl LoadPort {
    fn pair(&self) -> (usize, usize) {
        (self.phase, (self.phase + 1) % 3)
    }

    /// Adds this load's injected currents given node voltages.
    fn inject(&mut self, n: usize, v: &[Complex64], s: Complex64, out: &mut [Complex64]) {
        let at = |p: usize| p * n + self.node - 1;
        match self.class {
            ConnectionClass::Three => {
                for p in 0..3 {
                    out[at(p)] += (s / 3.0 / v[at(p)]).conj();
                }
            }
            ConnectionClass::Single => {
                let vn = v[at(self.phase)];
                let i = match &self.reduction {
                    Some(BranchReduction::Single { z, .. }) => {
                        let vm = branch_fixed_point(vn, s, *z, self.meter.unwrap_or(vn));
                        self.meter = Some(vm);
                        (s / vm).conj()
                    }
                    _ => (s / vn).conj(),
                };
                out[at(self.phase)] += i;
            }
            ConnectionClass::Two => {
                let (a, b) = self.pair();
                let vn = v[at(a)] - v[at(b)];
                let i = match &self.reduction {
                    Some(BranchReduction::Two { z, .. }) => {
                        let z_sum = z[(0, 1)] + z[(1, 0)] - z[(0, 0)] - z[(1, 1)];
                        let vm = branch_fixed_point(vn, s, -z_sum, self.meter.unwrap_or(vn));
                        self.meter = Some(vm);
                        (s / vm).conj()
                    }
                    _ => (s / vn).conj(),
                };
                out[at(a)] += i;
                out[at(b)] -= i;
            }
        }
    }

    /// Voltage magnitude reported by the meter.
    fn meter_magnitude(&self, n: usize, v: &[Complex64]) -> f64 {
        if let Some(vm) = self.meter {
            return vm.norm();
        }
        let at = |p: usize| p * n + self.node - 1;
        match self.class {
            ConnectionClass::Two => {
                let (a, b) = self.pair();
                (v[at(a)] - v[at(b)]).norm()
            }
            _ => v[at(self.phase)].norm(),
        }
    }
}

/// Solves `vm = vn + z conj(s / vm)` for the far-end voltage of a branch
/// that injects `s` at its meter.
fn branch_fixed_point(vn: Complex64, s: Complex64, z: Complex64, start: Complex64) -> Complex64 {
    let mut vm = start;
    for _ in 0..100 {
        let next = vn + z * (s / vm).conj();
        let done = (next - vm).norm() < 1e-14;
        vm = next;
        if done {
            break;
        }
    }
    vm
}

/// Exact-model voltages `[load][t]` and equivalent injections (per unit)
/// under the linear model, before voltage noise.
fn linear_voltages(
    model: &FeederModel,
    truth: &[usize],
    p: &[Vec<f64>],
    q: &[Vec<f64>],
    v0: &[Vec<f64>; 6],
) -> Result<Vec<Vec<f64>>> {
    let prepared = prepare_model(model, Exec::Sequential)?;
    let all: Vec<usize> = (0..prepared.net.m()).collect();
    let rs = prepared.reduced_sensitivity(&all)?;
    let m = all.len();
    let samples = p.first().map_or(0, Vec::len);
    Ok((0..m)
        .map(|mi| {
            let row = 3 * mi + truth[mi];
            let two = prepared.net.loads[mi].class == ConnectionClass::Two;
            (0..samples)
                .map(|t| {
                    let mut acc = 0.0;
                    for k in 0..m {
                        let col = 3 * k + truth[k];
                        acc += rs.k_hat[(row, col)] * p[k][t] + rs.l_hat[(row, col)] * q[k][t];
                    }
                    let reference = if two { v0[3 + truth[mi]][t] } else { v0[truth[mi]][t] };
                    reference + acc
                })
                .collect()
        })
        .collect())
}

/// Generates meter readings for `model` under `spec`.
pub fn generate(model: &FeederModel, spec: &SimulationSpec) -> Result<SimulationOutput> {
    check_spec(spec)?;
    model.validate()?;
    let net = crate::feeder::reduce_network(model)?;
    let truth = resolve_truth(&net, spec)?;
    let m = net.m();
    let samples = spec.samples;
    let sb_kw = net.base_power_va / 1e3;
    let vb = net.base_voltage_v;
    let noise_model = spec.noise_model.unwrap_or(spec.mode.default_noise_model());

    let profiles = consumption_profiles(model, spec)?;
    let v0 = substation_series(spec);

    // Injection-signed per-unit powers with meter noise on each reading.
    let mut power_rng = rng(spec.seed, Stream::PowerNoise);
    let mut p = vec![vec![0.0; samples]; m];
    let mut q = vec![vec![0.0; samples]; m];
    for k in 0..m {
        let mean_s = (0..samples)
            .map(|t| profiles.p_kw[k][t].hypot(profiles.q_kvar[k][t]))
            .sum::<f64>()
            / samples as f64
            / sb_kw;
        let sigma = noise_sigma(spec.noise, mean_s);
        for t in 0..samples {
            p[k][t] = -profiles.p_kw[k][t] / sb_kw + gaussian(&mut power_rng, sigma);
            q[k][t] = -profiles.q_kvar[k][t] / sb_kw + gaussian(&mut power_rng, sigma);
        }
    }

    let mut volt_rng = rng(spec.seed, Stream::VoltageNoise);
    let mut voltage_noise = |class: ConnectionClass| -> Vec<f64> {
        let nominal = if class == ConnectionClass::Two { SQRT3 } else { 1.0 };
        let sigma = noise_sigma(spec.noise, nominal);
        let draws = (0..samples).map(|_| gaussian(&mut volt_rng, sigma));
        match noise_model {
            NoiseModel::Reading => draws.collect(),
            NoiseModel::Increment => draws
                .scan(0.0, |acc, e| {
                    *acc += e;
                    Some(*acc)
                })
                .collect(),
        }
    };

    // Meter-level voltage magnitude and complex power per load and sample.
    let mut meter_v = vec![vec![0.0; samples]; m];
    let mut meter_s = vec![vec![Complex64::new(0.0, 0.0); samples]; m];
    let mut noise_added = Vec::with_capacity(m);
    match spec.mode {
        SimMode::Linear => {
            let v_eq = linear_voltages(model, &truth, &p, &q, &v0)?;
            for k in 0..m {
                let noise = voltage_noise(net.loads[k].class);
                for t in 0..samples {
                    let v = v_eq[k][t] + noise[t];
                    let s = Complex64::new(p[k][t], q[k][t]);
                    let (vm, sm) = match &net.loads[k].reduction {
                        Some(red) => red.invert(v, s)?,
                        None => (v, s),
                    };
                    meter_v[k][t] = vm;
                    meter_s[k][t] = sm;
                }
                noise_added.push(noise);
            }
        }
        SimMode::Nonlinear => {
            let solver = PowerFlowSolver::new(&net)?;
            let n = net.n();
            let mut ports: Vec<LoadPort> = net
                .loads
                .iter()
                .zip(&truth)
                .map(|(l, &phase)| LoadPort {
                    node: l.node,
                    class: l.class,
                    phase,
                    reduction: l.reduction.clone(),
                    meter: None,
                })
                .collect();
            for t in 0..samples {
                // Exact consumption drives the physics; noise is added to the
                // readings afterwards.
                let s_true: Vec<Complex64> = (0..m)
                    .map(|k| Complex64::new(-profiles.p_kw[k][t], -profiles.q_kvar[k][t]) / sb_kw)
                    .collect();
                let substation = balanced([v0[0][t], v0[1][t], v0[2][t]]);
                let sol = solver
                    .solve_with(substation, |v, out| {
                        out.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
                        for (port, s) in ports.iter_mut().zip(&s_true) {
                            port.inject(n, v, *s, out);
                        }
                    })
                    .map_err(|e| match e {
                        Error::PowerFlowDivergence { .. } => Error::Simulation(format!("sample {t}: {e}")),
                        other => other,
                    })?;
                let v: Vec<Complex64> = (0..3)
                    .flat_map(|ph| (1..=n).map(move |node| (ph, node)))
                    .map(|(ph, node)| sol.voltage(n + 1, ph, node))
                    .collect();
                for (k, port) in ports.iter_mut().enumerate() {
                    // Refresh the branch state at the converged node voltages.
                    let mut scratch = vec![Complex64::new(0.0, 0.0); 3 * n];
                    port.inject(n, &v, s_true[k], &mut scratch);
                    meter_v[k][t] = port.meter_magnitude(n, &v);
                    meter_s[k][t] = Complex64::new(p[k][t], q[k][t]);
                }
            }
            for (k, series) in meter_v.iter_mut().enumerate() {
                let noise = voltage_noise(net.loads[k].class);
                for (v, e) in series.iter_mut().zip(&noise) {
                    *v += e;
                }
                noise_added.push(noise);
            }
        }
    }

    // Metered subset: one seeded shuffle, nested across penetration levels.
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng(spec.seed, Stream::Penetration));
    let keep = ((spec.penetration * m as f64).round() as usize).clamp(1, m);
    let mut metered: Vec<usize> = order[..keep].to_vec();
    metered.sort_unstable();

    let times: Vec<DateTime<Utc>> = (0..samples).map(|t| spec.start + spec.interval * t as i32).collect();
    let ids: Vec<String> = metered.iter().map(|&k| net.loads[k].id.clone()).collect();
    let mut readings = MeterReadings::empty(times, ids.clone());
    let qz = |x: f64, step: f64| if spec.quantize { quantize(x, step) } else { x };
    for (row, &k) in metered.iter().enumerate() {
        let v_step = if net.loads[k].is_secondary() {
            spec.secondary_voltage_step_v
        } else {
            spec.primary_voltage_step_v
        };
        for t in 0..samples {
            readings.v[row][t] = qz(meter_v[k][t] * vb, v_step);
            readings.p[row][t] = qz(meter_s[k][t].re * sb_kw, spec.power_step_kw);
            readings.q[row][t] = qz(meter_s[k][t].im * sb_kw, spec.power_step_kw);
        }
    }
    for (dst, src) in readings.substation.iter_mut().zip(&v0) {
        *dst = src.iter().map(|v| v * vb).collect();
    }

    Ok(SimulationOutput {
        readings,
        truth: net
            .loads
            .iter()
            .zip(&truth)
            .map(|(l, &i)| (l.id.clone(), PhaseLabel::from_index(l.class, i)))
            .collect(),
        metered: ids,
        voltage_noise: metered.iter().map(|&k| std::mem::take(&mut noise_added[k])).collect(),
    })
}
