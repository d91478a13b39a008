use nalgebra::{DMatrix, Matrix3};

use super::assignment::PhaseAssignment;
use crate::error::{Error, Result};
use crate::feeder::ReducedNetwork;
use crate::linear_pf::SensitivityMatrices;
use crate::phase::ConnectionClass;

const SQRT3: f64 = 1.732_050_807_568_877_2;

pub fn w1() -> Matrix3<f64> {
    Matrix3::new(1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0)
}

pub fn w2() -> Matrix3<f64> {
    Matrix3::new(1.0, -1.0, 0.0, 0.0, 1.0, -1.0, -1.0, 0.0, 1.0)
}

/// The four 3x3 blocks a load contributes at its host node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadBlocks {
    /// Host node as a zero-based index over non-substation nodes.
    pub node: usize,
    pub class: ConnectionClass,
    pub u1: Matrix3<f64>,
    pub u2: Matrix3<f64>,
    pub u1_hat: Matrix3<f64>,
    pub u2_hat: Matrix3<f64>,
}

impl LoadBlocks {
    pub fn for_class(class: ConnectionClass, node: usize) -> Self {
        let (u1, u2, u1_hat, u2_hat) = match class {
            ConnectionClass::Single => (
                Matrix3::identity(),
                Matrix3::zeros(),
                Matrix3::identity(),
                Matrix3::zeros(),
            ),
            ConnectionClass::Two => (
                w1() * (SQRT3 / 2.0),
                w2() * 0.5,
                w1().transpose() * 0.5,
                w2().transpose() * (SQRT3 / 6.0),
            ),
            ConnectionClass::Three => (
                Matrix3::identity(),
                Matrix3::zeros(),
                Matrix3::repeat(1.0 / 3.0),
                Matrix3::zeros(),
            ),
        };
        Self {
            node,
            class,
            u1,
            u2,
            u1_hat,
            u2_hat,
        }
    }
}

/// `U1, U2` (3M x 3N) and `U1_hat, U2_hat` (3N x 3M), stored load-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTables {
    pub n: usize,
    pub loads: Vec<LoadBlocks>,
}

impl BlockTables {
    pub fn m(&self) -> usize {
        self.loads.len()
    }

    fn dense(&self, rows_by_load: bool, pick: impl Fn(&LoadBlocks) -> Matrix3<f64>) -> DMatrix<f64> {
        let (r, c) = if rows_by_load {
            (3 * self.m(), 3 * self.n)
        } else {
            (3 * self.n, 3 * self.m())
        };
        let mut out = DMatrix::zeros(r, c);
        for (m, lb) in self.loads.iter().enumerate() {
            let (br, bc) = if rows_by_load {
                (3 * m, 3 * lb.node)
            } else {
                (3 * lb.node, 3 * m)
            };
            out.fixed_view_mut::<3, 3>(br, bc).copy_from(&pick(lb));
        }
        out
    }

    pub fn u1(&self) -> DMatrix<f64> {
        self.dense(true, |b| b.u1)
    }

    pub fn u2(&self) -> DMatrix<f64> {
        self.dense(true, |b| b.u2)
    }

    pub fn u1_hat(&self) -> DMatrix<f64> {
        self.dense(false, |b| b.u1_hat)
    }

    pub fn u2_hat(&self) -> DMatrix<f64> {
        self.dense(false, |b| b.u2_hat)
    }
}

pub fn build_block_tables(net: &ReducedNetwork) -> BlockTables {
    BlockTables {
        n: net.n(),
        loads: net
            .loads
            .iter()
            .map(|l| LoadBlocks::for_class(l.class, l.node - 1))
            .collect(),
    }
}

/// Node-ordered nodal injections `(p_check, q_check)` produced by the
/// metered injections under assignment `x`.
pub fn map_injections(
    x: &PhaseAssignment,
    p_hat: &[f64],
    q_hat: &[f64],
    tables: &BlockTables,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = tables.m();
    if x.m() != m || p_hat.len() != m || q_hat.len() != m {
        return Err(Error::Dimension(format!(
            "{} loads in tables, {} in assignment, {}/{} injections",
            m,
            x.m(),
            p_hat.len(),
            q_hat.len()
        )));
    }
    let mut p = vec![0.0; 3 * tables.n];
    let mut q = vec![0.0; 3 * tables.n];
    for (k, lb) in tables.loads.iter().enumerate() {
        let i = x.phase(k);
        for r in 0..3 {
            let a = lb.u1_hat[(r, i)];
            let b = lb.u2_hat[(r, i)];
            p[3 * lb.node + r] += a * p_hat[k] + b * q_hat[k];
            q[3 * lb.node + r] += -b * p_hat[k] + a * q_hat[k];
        }
    }
    Ok((p, q))
}

/// `K_hat`, `L_hat` (3M x 3M), node-ordered by load and phase.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSensitivity {
    pub k_hat: DMatrix<f64>,
    pub l_hat: DMatrix<f64>,
}

impl ReducedSensitivity {
    pub fn m(&self) -> usize {
        self.k_hat.nrows() / 3
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            k_hat: DMatrix::zeros(3 * m, 3 * m),
            l_hat: DMatrix::zeros(3 * m, 3 * m),
        }
    }

    /// Permutes the phase indices of every load block by `shift` positions.
    /// Used to build deliberately wrong models.
    pub fn rotate_phases(&self, shift: usize) -> Self {
        let m = self.m();
        let idx = |r: usize| 3 * (r / 3) + (r % 3 + shift) % 3;
        let rot = |a: &DMatrix<f64>| DMatrix::from_fn(3 * m, 3 * m, |r, c| a[(idx(r), idx(c))]);
        Self {
            k_hat: rot(&self.k_hat),
            l_hat: rot(&self.l_hat),
        }
    }
}

fn mul3(a: &Matrix3<f64>, b: &Matrix3<f64>) -> Matrix3<f64> {
    // Explicit summation order: columns of the product for identical
    // columns of `b` come out bitwise identical.
    Matrix3::from_fn(|r, c| a[(r, 0)] * b[(0, c)] + a[(r, 1)] * b[(1, c)] + a[(r, 2)] * b[(2, c)])
}

fn check_sensitivity(tables: &BlockTables, sens: &SensitivityMatrices) -> Result<()> {
    let s = &sens.node_ordered;
    let dim = 3 * tables.n;
    for (name, mat) in [("K", &s.k), ("L", &s.l), ("K_theta", &s.k_theta), ("L_theta", &s.l_theta)] {
        if mat.nrows() != dim || mat.ncols() != dim {
            return Err(Error::Dimension(format!(
                "{name} is {}x{}, expected {dim}x{dim}",
                mat.nrows(),
                mat.ncols()
            )));
        }
    }
    if let Some(lb) = tables.loads.iter().find(|lb| lb.node >= tables.n) {
        return Err(Error::Dimension(format!("load on node index {} of {}", lb.node, tables.n)));
    }
    Ok(())
}

/// Block-wise evaluation of
/// `K_hat = (U1 K + U2 K_theta) U1_hat + (U1 L + U2 L_theta) U2_hat` and
/// `L_hat = (U1 K + U2 K_theta) U2_hat - (U1 L + U2 L_theta) U1_hat`.
pub fn build_reduced_sensitivity(tables: &BlockTables, sens: &SensitivityMatrices) -> Result<ReducedSensitivity> {
    check_sensitivity(tables, sens)?;
    let s = &sens.node_ordered;
    let m = tables.m();
    let block = |mat: &DMatrix<f64>, a: usize, b: usize| -> Matrix3<f64> {
        mat.fixed_view::<3, 3>(3 * a, 3 * b).into_owned()
    };
    let mut out = ReducedSensitivity::zeros(m);
    for (mi, lm) in tables.loads.iter().enumerate() {
        for (ki, lk) in tables.loads.iter().enumerate() {
            let (a, b) = (lm.node, lk.node);
            let left = mul3(&lm.u1, &block(&s.k, a, b)) + mul3(&lm.u2, &block(&s.k_theta, a, b));
            let right = mul3(&lm.u1, &block(&s.l, a, b)) + mul3(&lm.u2, &block(&s.l_theta, a, b));
            let kh = mul3(&left, &lk.u1_hat) + mul3(&right, &lk.u2_hat);
            let lh = mul3(&left, &lk.u2_hat) - mul3(&right, &lk.u1_hat);
            out.k_hat.fixed_view_mut::<3, 3>(3 * mi, 3 * ki).copy_from(&kh);
            out.l_hat.fixed_view_mut::<3, 3>(3 * mi, 3 * ki).copy_from(&lh);
        }
    }
    Ok(out)
}

/// Same quantity as [`build_reduced_sensitivity`] formed with dense
/// products of the full block tables.
pub fn build_reduced_sensitivity_dense(
    tables: &BlockTables,
    sens: &SensitivityMatrices,
) -> Result<ReducedSensitivity> {
    check_sensitivity(tables, sens)?;
    let s = &sens.node_ordered;
    let (u1, u2, u1h, u2h) = (tables.u1(), tables.u2(), tables.u1_hat(), tables.u2_hat());
    let left = &u1 * &s.k + &u2 * &s.k_theta;
    let right = &u1 * &s.l + &u2 * &s.l_theta;
    Ok(ReducedSensitivity {
        k_hat: &left * &u1h + &right * &u2h,
        l_hat: &left * &u2h - &right * &u1h,
    })
}
