use super::assignment::PhaseAssignment;
use super::measurement::DifferencedSeries;
use super::tables::ReducedSensitivity;
use crate::error::{Error, Result};

fn check(x: &PhaseAssignment, ds: &DifferencedSeries, rs: &[ReducedSensitivity]) -> Result<()> {
    if x.m() != ds.m() {
        return Err(Error::Dimension(format!("assignment has {} loads, series {}", x.m(), ds.m())));
    }
    if rs.len() < ds.topologies() {
        return Err(Error::Dimension(format!(
            "{} sensitivity sets for {} topologies",
            rs.len(),
            ds.topologies()
        )));
    }
    if let Some(r) = rs.iter().find(|r| r.m() != ds.m()) {
        return Err(Error::Dimension(format!("sensitivity for {} loads, series has {}", r.m(), ds.m())));
    }
    Ok(())
}

#[inline]
fn entry(m: usize, t: usize, x: &PhaseAssignment, ds: &DifferencedSeries, rs: &ReducedSensitivity) -> f64 {
    let row = 3 * m + x.phase(m);
    let mut acc = 0.0;
    for k in 0..ds.m() {
        let col = 3 * k + x.phase(k);
        acc += rs.k_hat[(row, col)] * ds.p[k][t] + rs.l_hat[(row, col)] * ds.q[k][t];
    }
    ds.reference(m, x.phase(m), t) + acc
}

/// Modeled voltage change of every load at differenced sample `t`.
pub fn model_voltage_delta(
    t: usize,
    x: &PhaseAssignment,
    ds: &DifferencedSeries,
    rs: &ReducedSensitivity,
) -> Result<Vec<f64>> {
    check(x, ds, std::slice::from_ref(rs))?;
    if t >= ds.t() {
        return Err(Error::Dimension(format!("sample {t} of {}", ds.t())));
    }
    Ok((0..ds.m()).map(|m| entry(m, t, x, ds, rs)).collect())
}

/// `v_m(t) - v_m(t, x)` for one load, with the sensitivity set chosen by
/// each sample's topology.
pub fn load_residuals(
    m: usize,
    x: &PhaseAssignment,
    ds: &DifferencedSeries,
    rs: &[ReducedSensitivity],
) -> Result<Vec<f64>> {
    check(x, ds, rs)?;
    let mut out = Vec::with_capacity(ds.t());
    for seg in &ds.segments {
        let r = &rs[seg.topology];
        out.extend(seg.range.clone().map(|t| ds.v[m][t] - entry(m, t, x, ds, r)));
    }
    Ok(out)
}

/// Marginal objective `f_m(x) = (1/T) sum_t (v_m(t) - v_m(t, x))^2`.
pub fn marginal_objective(
    m: usize,
    x: &PhaseAssignment,
    ds: &DifferencedSeries,
    rs: &[ReducedSensitivity],
) -> Result<f64> {
    let r = load_residuals(m, x, ds, rs)?;
    Ok(r.iter().map(|e| e * e).sum::<f64>() / r.len() as f64)
}

pub fn marginal_objectives(x: &PhaseAssignment, ds: &DifferencedSeries, rs: &[ReducedSensitivity]) -> Result<Vec<f64>> {
    (0..ds.m()).map(|m| marginal_objective(m, x, ds, rs)).collect()
}

/// Identity-weighted joint objective `(1/T) sum_t |v(t) - v(t, x)|^2`.
pub fn joint_objective(x: &PhaseAssignment, ds: &DifferencedSeries, rs: &[ReducedSensitivity]) -> Result<f64> {
    Ok(marginal_objectives(x, ds, rs)?.iter().sum())
}
