use nalgebra::DMatrix;
use num_complex::Complex64;

use super::ReducedNetwork;
use crate::error::{Error, Result};

/// Nodal admittance matrix in phase order: row/column `phase * (N + 1) + node`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub y: DMatrix<Complex64>,
    /// N + 1, including the substation.
    pub nodes: usize,
}

impl AdmittanceMatrix {
    pub fn index(&self, phase: usize, node: usize) -> usize {
        phase * self.nodes + node
    }
}

/// Assembles `Y` from the inverted 3x3 series impedance of every line
/// section. Shunt terms are not modelled.
pub fn assemble_admittance(net: &ReducedNetwork) -> Result<AdmittanceMatrix> {
    let nodes = net.nodes.len();
    let mut y = DMatrix::<Complex64>::zeros(3 * nodes, 3 * nodes);
    for line in &net.lines {
        let block = line
            .z
            .try_inverse()
            .filter(|b| b.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
            .ok_or_else(|| Error::SingularImpedance(line.id.clone()))?;
        for p in 0..3 {
            for q in 0..3 {
                let v = block[(p, q)];
                let (fp, fq) = (p * nodes + line.from, q * nodes + line.from);
                let (tp, tq) = (p * nodes + line.to, q * nodes + line.to);
                y[(fp, fq)] += v;
                y[(tp, tq)] += v;
                y[(fp, tq)] -= v;
                y[(tp, fq)] -= v;
            }
        }
    }
    Ok(AdmittanceMatrix { y, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{LineSection, ReducedLoad};
    use crate::phase::ConnectionClass;
    use nalgebra::Matrix3;

    fn two_node(z: Matrix3<Complex64>) -> ReducedNetwork {
        ReducedNetwork {
            base_voltage_v: 1.0,
            base_power_va: 1.0,
            nodes: vec!["0".into(), "1".into()],
            lines: vec![LineSection {
                id: "l".into(),
                from: 0,
                to: 1,
                z,
            }],
            loads: vec![ReducedLoad {
                id: "L".into(),
                node: 1,
                class: ConnectionClass::Single,
                reduction: None,
                phase: None,
            }],
        }
    }

    #[test]
    fn single_branch_block_form() {
        let zs = Complex64::new(0.01, 0.02);
        let net = two_node(Matrix3::from_diagonal_element(zs));
        let a = assemble_admittance(&net).unwrap();
        assert_eq!(a.y.shape(), (6, 6));
        let ys = Complex64::new(1.0, 0.0) / zs;
        for p in 0..3 {
            for q in 0..3 {
                let expect = if p == q { ys } else { Complex64::new(0.0, 0.0) };
                assert!((a.y[(a.index(p, 0), a.index(q, 0))] - expect).norm() < 1e-9);
                assert!((a.y[(a.index(p, 1), a.index(q, 1))] - expect).norm() < 1e-9);
                assert!((a.y[(a.index(p, 0), a.index(q, 1))] + expect).norm() < 1e-9);
                assert!((a.y[(a.index(p, 1), a.index(q, 0))] + expect).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn singular_block_reports_section() {
        let net = two_node(Matrix3::zeros());
        assert!(matches!(assemble_admittance(&net), Err(Error::SingularImpedance(id)) if id == "l"));
    }
}
