use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Read;

use rand::Rng;

use super::noise::{gaussian, reactive_ratio};
use crate::error::{Error, Result};

/// Consumption profiles in kW and kVAr, `[load][time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Profiles {
    pub p_kw: Vec<Vec<f64>>,
    pub q_kvar: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticProfile {
    /// Mean consumption of an average load, kW.
    pub base_kw: f64,
    /// Per-load scale drawn from `U(1 - spread, 1 + spread)`.
    pub spread: f64,
    /// Amplitude of the shared daily cycle.
    pub daily_amplitude: f64,
    /// Per-load shift of the daily cycle, hours, drawn from `U(-j, j)`.
    pub daily_jitter_h: f64,
    /// Stationary standard deviation of each load's own log-factor.
    pub volatility: f64,
    /// Stationary standard deviation of the feeder-wide log-factor.
    pub common_volatility: f64,
    /// Hour-to-hour AR(1) coefficient of both log-factors.
    pub persistence: f64,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        Self {
            base_kw: 100.0,
            spread: 0.5,
            daily_amplitude: 0.4,
            daily_jitter_h: 2.0,
            volatility: 0.2,
            common_volatility: 0.3,
            persistence: 0.9,
        }
    }
}

/// Stationary AR(1) path with standard deviation `sigma`.
fn ar1<R: Rng + ?Sized>(rng: &mut R, samples: usize, phi: f64, sigma: f64) -> Vec<f64> {
    let innovation = sigma * (1.0 - phi * phi).max(0.0).sqrt();
    let mut x = gaussian(rng, sigma);
    (0..samples)
        .map(|_| {
            let out = x;
            x = phi * x + gaussian(rng, innovation);
            out
        })
        .collect()
}

/// Real-power consumption
/// `scale_k * (1 + a sin(2 pi (t + s_k) / 24)) * exp(c(t) + e_k(t))` with a
/// feeder-wide log-factor `c` and per-load log-factors `e_k`.
pub fn synthetic_real_power<R: Rng + ?Sized>(
    rng: &mut R,
    loads: usize,
    samples: usize,
    shape: &SyntheticProfile,
) -> Vec<Vec<f64>> {
    let common = ar1(rng, samples, shape.persistence, shape.common_volatility);
    (0..loads)
        .map(|_| {
            let scale = shape.base_kw * rng.random_range(1.0 - shape.spread..=1.0 + shape.spread);
            let shift = if shape.daily_jitter_h > 0.0 {
                rng.random_range(-shape.daily_jitter_h..shape.daily_jitter_h)
            } else {
                0.0
            };
            let own = ar1(rng, samples, shape.persistence, shape.volatility);
            (0..samples)
                .map(|t| {
                    let daily = 1.0 + shape.daily_amplitude * (2.0 * PI * (t as f64 + shift) / 24.0).sin();
                    scale * daily * (common[t] + own[t]).exp()
                })
                .collect()
        })
        .collect()
}

/// Reactive power from power factors drawn from `U(0.9, 1)` per load and
/// sample (lagging, same sign as the real power).
pub fn reactive_from_power_factor<R: Rng + ?Sized>(rng: &mut R, p_kw: &[Vec<f64>]) -> Vec<Vec<f64>> {
    p_kw.iter()
        .map(|series| {
            series
                .iter()
                .map(|&p| p * reactive_ratio(rng.random_range(0.9..=1.0)))
                .collect()
        })
        .collect()
}

/// Reads wide-format real-power profiles: a `time` column followed by one
/// column of kW per load id. Returns series ordered as `load_ids`.
pub fn read_profiles_csv<R: Read>(reader: R, load_ids: &[String], samples: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col: HashMap<&str, usize> = headers.iter().enumerate().skip(1).map(|(i, h)| (h, i)).collect();
    let cols = load_ids
        .iter()
        .map(|id| {
            col.get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Simulation(format!("profile file has no column for load `{id}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![Vec::with_capacity(samples); load_ids.len()];
    for (line, rec) in rdr.records().enumerate() {
        if line == samples {
            break;
        }
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::Simulation(format!(
                "profile row {} has {} fields, header has {}",
                line + 2,
                rec.len(),
                headers.len()
            )));
        }
        for (series, &c) in out.iter_mut().zip(&cols) {
            let v: f64 = rec[c]
                .parse()
                .map_err(|_| Error::Simulation(format!("profile row {}: bad value `{}`", line + 2, &rec[c])))?;
            series.push(v);
        }
    }
    if out.first().map_or(0, Vec::len) < samples {
        return Err(Error::Simulation(format!(
            "profile file has {} rows, {samples} needed",
            out.first().map_or(0, Vec::len)
        )));
    }
    Ok(out)
}
