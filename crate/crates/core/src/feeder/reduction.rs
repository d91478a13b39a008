//! Replacing loaded service branches by equivalent loads on the primary.

use nalgebra::Matrix2;
use num_complex::Complex64;

use super::{Attachment, BranchImpedance, FeederModel, LineSection};
use crate::error::{Error, Result};
use crate::phase::{ConnectionClass, PhaseLabel};

fn check_magnitude(what: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { what, value: v })
    }
}

/// Load current with the meter voltage as angle reference: `|I| = |S|/|V|`
/// at angle `-arg(S)`.
fn reference_current(s: Complex64, v_mag: f64) -> Complex64 {
    (s / v_mag).conj()
}

/// Equivalent (voltage magnitude, injection) at the head of a single-phase
/// branch of impedance `z` serving a meter that reads `v_mag` and `s`.
pub fn reduce_single_phase_branch(z: Complex64, s: Complex64, v_mag: f64) -> Result<(f64, Complex64)> {
    check_magnitude("meter voltage magnitude", v_mag)?;
    let i = reference_current(s, v_mag);
    let v_eq = (v_mag - z * i).norm();
    let s_eq = s - z * i.norm_sqr();
    Ok((v_eq, s_eq))
}

/// Two-phase counterpart of [`reduce_single_phase_branch`]; `v12_mag` is the
/// line-to-line magnitude at the meter.
pub fn reduce_two_phase_branch(
    z: &Matrix2<Complex64>,
    s: Complex64,
    v12_mag: f64,
) -> Result<(f64, Complex64)> {
    check_magnitude("meter line-to-line voltage magnitude", v12_mag)?;
    let z_sum = loop_impedance(z);
    let i = reference_current(s, v12_mag);
    let v_eq = (v12_mag + z_sum * i).norm();
    let s_eq = s + z_sum * i.norm_sqr();
    Ok((v_eq, s_eq))
}

/// `z12 + z21 - z11 - z22`.
pub(crate) fn loop_impedance(z: &Matrix2<Complex64>) -> Complex64 {
    z[(0, 1)] + z[(1, 0)] - z[(0, 0)] - z[(1, 1)]
}

/// Inverse of [`reduce_single_phase_branch`]: from the branch-head magnitude
/// and injection, recover what the meter at the far end reads.
pub fn expand_single_phase_branch(z: Complex64, s_eq: Complex64, v_eq: f64) -> Result<(f64, Complex64)> {
    check_magnitude("branch-head voltage magnitude", v_eq)?;
    let i = reference_current(s_eq, v_eq);
    let v_meter = v_eq + z * i;
    Ok((v_meter.norm(), v_meter * i.conj()))
}

/// Inverse of [`reduce_two_phase_branch`].
pub fn expand_two_phase_branch(
    z: &Matrix2<Complex64>,
    s_eq: Complex64,
    v12_eq: f64,
) -> Result<(f64, Complex64)> {
    check_magnitude("branch-head line-to-line voltage magnitude", v12_eq)?;
    let i = reference_current(s_eq, v12_eq);
    let v_meter = v12_eq - loop_impedance(z) * i;
    Ok((v_meter.norm(), v_meter * i.conj()))
}

/// Per-load measurement transform retained from the reduction.
#[derive(Debug, Clone, PartialEq)]
pub enum BranchReduction {
    Single { branch: String, z: Complex64 },
    Two { branch: String, z: Matrix2<Complex64> },
}

impl BranchReduction {
    /// Maps one meter sample to its equivalent on the primary node.
    pub fn apply(&self, v_mag: f64, s: Complex64) -> Result<(f64, Complex64)> {
        match self {
            BranchReduction::Single { z, .. } => reduce_single_phase_branch(*z, s, v_mag),
            BranchReduction::Two { z, .. } => reduce_two_phase_branch(z, s, v_mag),
        }
    }

    /// Maps an equivalent primary-side sample back to the meter.
    pub fn invert(&self, v_eq: f64, s_eq: Complex64) -> Result<(f64, Complex64)> {
        match self {
            BranchReduction::Single { z, .. } => expand_single_phase_branch(*z, s_eq, v_eq),
            BranchReduction::Two { z, .. } => expand_two_phase_branch(z, s_eq, v_eq),
        }
    }

    pub fn branch(&self) -> &str {
        match self {
            BranchReduction::Single { branch, .. } | BranchReduction::Two { branch, .. } => branch,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedLoad {
    pub id: String,
    /// Host primary node (never the substation).
    pub node: usize,
    pub class: ConnectionClass,
    pub reduction: Option<BranchReduction>,
    pub phase: Option<PhaseLabel>,
}

impl ReducedLoad {
    /// Whether the meter sits on a secondary (service) branch.
    pub fn is_secondary(&self) -> bool {
        self.reduction.is_some()
    }
}

/// Primary-only network on which the power-flow algebra runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetwork {
    pub base_voltage_v: f64,
    pub base_power_va: f64,
    pub nodes: Vec<String>,
    pub lines: Vec<LineSection>,
    pub loads: Vec<ReducedLoad>,
}

impl ReducedNetwork {
    pub fn n(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn m(&self) -> usize {
        self.loads.len()
    }

    pub fn load_index(&self, id: &str) -> Option<usize> {
        self.loads.iter().position(|l| l.id == id)
    }

    /// Copy of the network keeping only the listed loads, in the given order.
    pub fn with_loads(&self, indices: &[usize]) -> ReducedNetwork {
        ReducedNetwork {
            loads: indices.iter().map(|&i| self.loads[i].clone()).collect(),
            ..self.clone()
        }
    }
}

/// Converts every loaded service branch into an equivalent load hosted on the
/// branch's primary node.
pub fn reduce_network(model: &FeederModel) -> Result<ReducedNetwork> {
    let mut loads = Vec::with_capacity(model.loads.len());
    for load in &model.loads {
        let (node, reduction) = match load.attachment {
            Attachment::Node(n) => (n, None),
            Attachment::Branch(b) => {
                let branch = model.service_branches.get(b).ok_or_else(|| Error::InvalidLoad {
                    id: load.id.clone(),
                    reason: format!("branch index {b} out of range"),
                })?;
                if branch.node == 0 || branch.node >= model.nodes.len() {
                    return Err(Error::BranchChain(branch.id.clone()));
                }
                let reduction = match &branch.impedance {
                    BranchImpedance::Single(z) => BranchReduction::Single {
                        branch: branch.id.clone(),
                        z: *z,
                    },
                    BranchImpedance::Two(z) => BranchReduction::Two {
                        branch: branch.id.clone(),
                        z: *z,
                    },
                };
                (branch.node, Some(reduction))
            }
        };
        loads.push(ReducedLoad {
            id: load.id.clone(),
            node,
            class: load.class,
            reduction,
            phase: load.phase,
        });
    }
    Ok(ReducedNetwork {
        base_voltage_v: model.base_voltage_v,
        base_power_va: model.base_power_va,
        nodes: model.nodes.clone(),
        lines: model.lines.clone(),
        loads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_impedance_single_branch_is_identity() {
        let (v, s) = reduce_single_phase_branch(c(0.0, 0.0), c(0.1, 0.05), 0.98).unwrap();
        assert_eq!(v, 0.98);
        assert_eq!(s, c(0.1, 0.05));
    }

    #[test]
    fn single_branch_hand_computed() {
        let (v, s) = reduce_single_phase_branch(c(0.01, 0.02), c(1.0, 0.0), 1.0).unwrap();
        // |1 - (0.01 + j0.02)| = sqrt(0.99^2 + 0.02^2)
        assert_abs_diff_eq!(v, (0.99f64 * 0.99 + 0.02 * 0.02).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.990202, epsilon = 1e-6);
        assert_abs_diff_eq!(s.re, 0.99, epsilon = 1e-15);
        assert_abs_diff_eq!(s.im, -0.02, epsilon = 1e-15);
    }

    #[test]
    fn no_current_no_drop() {
        let (v, s) = reduce_single_phase_branch(c(0.3, 0.7), c(0.0, 0.0), 1.0).unwrap();
        assert_eq!((v, s), (1.0, c(0.0, 0.0)));
        let z = Matrix2::new(c(0.1, 0.2), c(0.01, 0.0), c(0.01, 0.0), c(0.1, 0.2));
        let (v, s) = reduce_two_phase_branch(&z, c(0.0, 0.0), 1.7).unwrap();
        assert_eq!((v, s), (1.7, c(0.0, 0.0)));
    }

    #[test]
    fn nonpositive_voltage_rejected() {
        assert!(reduce_single_phase_branch(c(0.0, 0.0), c(1.0, 0.0), 0.0).is_err());
        assert!(reduce_two_phase_branch(&Matrix2::zeros(), c(1.0, 0.0), -1.0).is_err());
    }

    #[test]
    fn two_phase_cancellation() {
        let zs = c(0.02, 0.04);
        let z = Matrix2::new(zs, zs, zs, zs);
        let (v, s) = reduce_two_phase_branch(&z, c(0.4, 0.1), 1.71).unwrap();
        assert_eq!(v, 1.71);
        assert_eq!(s, c(0.4, 0.1));
    }

    #[test]
    fn two_phase_hand_computed() {
        let zd = c(0.02, 0.04);
        let zm = c(0.005, 0.01);
        let z = Matrix2::new(zd, zm, zm, zd);
        assert_abs_diff_eq!(loop_impedance(&z).re, -0.03, epsilon = 1e-15);
        assert_abs_diff_eq!(loop_impedance(&z).im, -0.06, epsilon = 1e-15);
        let (v, s) = reduce_two_phase_branch(&z, c(1.0, 0.0), 1.0).unwrap();
        assert_abs_diff_eq!(v, (0.97f64 * 0.97 + 0.06 * 0.06).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.971854, epsilon = 1e-6);
        assert_abs_diff_eq!(s.re, 0.97, epsilon = 1e-15);
        assert_abs_diff_eq!(s.im, -0.06, epsilon = 1e-15);
    }

    #[test]
    fn expand_inverts_reduce() {
        let z = c(0.03, 0.05);
        let (vm, sm) = expand_single_phase_branch(z, c(-0.2, -0.07), 0.97).unwrap();
        let (v, s) = reduce_single_phase_branch(z, sm, vm).unwrap();
        assert_abs_diff_eq!(v, 0.97, epsilon = 1e-14);
        assert_abs_diff_eq!(s.re, -0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(s.im, -0.07, epsilon = 1e-14);

        let zb = Matrix2::new(c(0.04, 0.08), c(0.01, 0.03), c(0.01, 0.03), c(0.04, 0.08));
        let (vm, sm) = expand_two_phase_branch(&zb, c(-0.3, -0.1), 1.69).unwrap();
        let (v, s) = reduce_two_phase_branch(&zb, sm, vm).unwrap();
        assert_abs_diff_eq!(v, 1.69, epsilon = 1e-14);
        assert_abs_diff_eq!(s.re, -0.3, epsilon = 1e-14);
        assert_abs_diff_eq!(s.im, -0.1, epsilon = 1e-14);
    }
}
