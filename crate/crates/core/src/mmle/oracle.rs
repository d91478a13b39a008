//! Exhaustive minimization of the summed marginal objectives.

use crate::connection::{marginal_objectives, DifferencedSeries, PhaseAssignment, ReducedSensitivity};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::phase::ConnectionClass;

/// Largest load count enumerated by [`exhaustive_minimizers`].
pub const ORACLE_MAX_LOADS: usize = 7;

/// Every assignment attaining the smallest `sum_m f_m`, in lexicographic
/// order, with that minimum.
pub fn exhaustive_minimizers(
    ds: &DifferencedSeries,
    rs: &[ReducedSensitivity],
    exec: Exec,
) -> Result<(Vec<PhaseAssignment>, f64)> {
    let m = ds.m();
    if m > ORACLE_MAX_LOADS {
        return Err(Error::TooLarge(m, ORACLE_MAX_LOADS));
    }
    let total = 3usize.pow(m as u32);
    let sums = exec.try_map_range(total, |code| {
        let x = PhaseAssignment::from_code(ds.load_ids.clone(), ds.classes.clone(), code as u64);
        Ok::<_, Error>(marginal_objectives(&x, ds, rs)?.iter().sum::<f64>())
    })?;
    let best = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let minimizers = sums
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == best)
        .map(|(code, _)| PhaseAssignment::from_code(ds.load_ids.clone(), ds.classes.clone(), code as u64))
        .collect();
    Ok((minimizers, best))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub matches: bool,
    /// Loads where the estimate differs from the closest minimizer.
    pub differing: Vec<String>,
    /// The match relies on three-phase loads whose triple does not change
    /// the objective.
    pub degenerate: bool,
    pub estimate_sum: f64,
    pub oracle_sum: f64,
}

/// Compares an estimate against the enumerated minimizers. Disagreement is
/// tolerated only on three-phase loads and only when the estimate attains
/// the same minimum.
pub fn compare_with_oracle(
    estimate: &PhaseAssignment,
    ds: &DifferencedSeries,
    rs: &[ReducedSensitivity],
    minimizers: &[PhaseAssignment],
    oracle_sum: f64,
) -> Result<OracleComparison> {
    let estimate_sum: f64 = marginal_objectives(estimate, ds, rs)?.iter().sum();
    let closest = minimizers
        .iter()
        .min_by_key(|x| estimate.differences(x, false).len())
        .ok_or_else(|| Error::Dimension("no minimizers".into()))?;
    let diff = estimate.differences(closest, false);
    let only_three = diff.iter().all(|&k| estimate.class(k) == ConnectionClass::Three);
    let tol = 1e-12 * oracle_sum.abs().max(1e-300) + 1e-24;
    let same_value = estimate_sum <= oracle_sum + tol;
    Ok(OracleComparison {
        matches: diff.is_empty() || (only_three && same_value),
        degenerate: !diff.is_empty() && only_three && same_value,
        differing: diff.iter().map(|&k| estimate.ids()[k].clone()).collect(),
        estimate_sum,
        oracle_sum,
    })
}
