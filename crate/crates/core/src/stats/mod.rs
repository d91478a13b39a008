//! Residual checks and accuracy metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::phase::PhaseLabel;

/// Fewest samples accepted by [`ks_normality`].
pub const KS_MIN_SAMPLES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    /// Classical asymptotic p-value. The normal's mean and deviation are
    /// estimated from the same sample, which makes this value conservative.
    pub p_value: f64,
    pub n: usize,
}

impl KsResult {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value >= level
    }
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against a normal with the sample mean
/// and standard deviation.
pub fn ks_normality(series: &[f64]) -> Result<KsResult> {
    let n = series.len();
    if n < KS_MIN_SAMPLES {
        return Err(Error::Degenerate(format!("{n} samples, at least {KS_MIN_SAMPLES} needed")));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite sample".into()));
    }
    let (mean, std) = mean_std(series);
    if !(std > 0.0) {
        return Err(Error::Degenerate("zero variance".into()));
    }
    let normal = Normal::new(mean, std).map_err(|e| Error::Degenerate(e.to_string()))?;
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = normal.cdf(x);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
        n,
    })
}

/// Normalized autocorrelations `r(0..=max_lag)`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= max_lag {
        return Err(Error::Degenerate(format!("{n} samples for lag {max_lag}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if !(denom > 0.0) {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok((0..=max_lag)
        .map(|lag| dev.iter().zip(&dev[lag..]).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect())
}

/// Largest `|r(l)|` over lags `1..=max_lag`.
pub fn max_abs_autocorrelation(series: &[f64], max_lag: usize) -> Result<f64> {
    Ok(autocorrelation(series, max_lag)?[1..].iter().fold(0.0, |m, r| m.max(r.abs())))
}

/// Fraction of assigned loads whose label matches the truth.
pub fn accuracy(assigned: &BTreeMap<String, PhaseLabel>, truth: &BTreeMap<String, PhaseLabel>) -> Result<f64> {
    if assigned.is_empty() {
        return Err(Error::Measurement("no assigned loads to score".into()));
    }
    let mut correct = 0;
    for (id, label) in assigned {
        let t = truth
            .get(id)
            .ok_or_else(|| Error::Measurement(format!("load `{id}` has no truth label")))?;
        if t == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / assigned.len() as f64)
}

/// Summary of one load's residual series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub load: String,
    pub mean: f64,
    pub std: f64,
    pub ks_statistic: Option<f64>,
    pub ks_p_value: Option<f64>,
    pub max_abs_autocorrelation: Option<f64>,
}

/// Lags scanned by [`summarize_residuals`].
pub const AUTOCORRELATION_LAGS: usize = 20;

pub fn summarize_residuals(load: &str, residuals: &[f64]) -> ResidualSummary {
    let (mean, std) = if residuals.len() > 1 {
        mean_std(residuals)
    } else {
        (residuals.first().copied().unwrap_or(0.0), 0.0)
    };
    let ks = ks_normality(residuals).ok();
    ResidualSummary {
        load: load.to_string(),
        mean,
        std,
        ks_statistic: ks.map(|k| k.statistic),
        ks_p_value: ks.map(|k| k.p_value),
        max_abs_autocorrelation: max_abs_autocorrelation(residuals, AUTOCORRELATION_LAGS).ok(),
    }
}
