use nalgebra::DMatrix;
use std::f64::consts::PI;

use super::alpha_pow;
use crate::error::{Error, Result};
use crate::feeder::AdmittanceMatrix;

/// Relative singular-value threshold used to decide numeric rank.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// The balanced operating point the model is linearized around.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatSolution;

impl FlatSolution {
    pub const MAGNITUDE: f64 = 1.0;
    pub const ANGLES: [f64; 3] = [0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0];

    /// Phase-ordered flat angles for `nodes` nodes.
    pub fn angles(nodes: usize) -> Vec<f64> {
        (0..3 * nodes).map(|i| Self::ANGLES[i / nodes]).collect()
    }
}

/// Substation-free system, `[A11 A12; A21 A22]` with node 0 removed from every
/// block, stacked into one 6N x 6N matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    /// Smallest over largest singular value.
    pub sigma_ratio: f64,
    pub diagnostic: Option<String>,
}

impl ReducedSystem {
    pub fn n(&self) -> usize {
        self.matrix.nrows() / 6
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.matrix.nrows()
    }

    /// Block `(r, c)` with `r, c` in `{0, 1}` (0 = magnitude/real, 1 = angle/reactive).
    pub fn block(&self, r: usize, c: usize) -> DMatrix<f64> {
        let n3 = 3 * self.n();
        self.matrix.view((r * n3, c * n3), (n3, n3)).into_owned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    /// N + 1.
    pub nodes: usize,
    pub a11: DMatrix<f64>,
    pub a12: DMatrix<f64>,
    pub a21: DMatrix<f64>,
    pub a22: DMatrix<f64>,
    pub reduced: Option<ReducedSystem>,
}

impl SystemMatrices {
    pub fn n(&self) -> usize {
        self.nodes - 1
    }
}

/// `A11 = -A22 = Re(Phi^-1 Y Phi)`, `A12 = A21 = -Im(Phi^-1 Y Phi)` with
/// `Phi = diag(I, alpha I, alpha^2 I)`.
pub fn build_a(y: &AdmittanceMatrix) -> Result<SystemMatrices> {
    let dim = y.y.nrows();
    if y.y.ncols() != dim || dim != 3 * y.nodes || y.nodes == 0 {
        return Err(Error::Dimension(format!(
            "admittance matrix is {}x{} for {} nodes",
            y.y.nrows(),
            y.y.ncols(),
            y.nodes
        )));
    }
    let nodes = y.nodes;
    let rotated = DMatrix::from_fn(dim, dim, |r, c| {
        let shift = (c / nodes) as i32 - (r / nodes) as i32;
        y.y[(r, c)] * alpha_pow(shift)
    });
    let a11 = rotated.map(|v| v.re);
    let a12 = rotated.map(|v| -v.im);
    Ok(SystemMatrices {
        nodes,
        a22: -&a11,
        a21: a12.clone(),
        a11,
        a12,
        reduced: None,
    })
}

/// Deletes the substation's rows and columns from every phase block and
/// reports the numeric rank of the result.
pub fn remove_substation(mut a: SystemMatrices) -> SystemMatrices {
    let nodes = a.nodes;
    let n = nodes - 1;
    let keep: Vec<usize> = (0..3)
        .flat_map(|p| (1..nodes).map(move |k| p * nodes + k))
        .collect();
    let n3 = 3 * n;
    let mut m = DMatrix::<f64>::zeros(2 * n3, 2 * n3);
    for (bi, row_blocks) in [[&a.a11, &a.a12], [&a.a21, &a.a22]].iter().enumerate() {
        for (bj, block) in row_blocks.iter().enumerate() {
            for (i, &ri) in keep.iter().enumerate() {
                for (j, &cj) in keep.iter().enumerate() {
                    m[(bi * n3 + i, bj * n3 + j)] = block[(ri, cj)];
                }
            }
        }
    }
    let (rank, sigma_ratio, diagnostic) = numeric_rank(&m, n);
    a.reduced = Some(ReducedSystem {
        matrix: m,
        rank,
        sigma_ratio,
        diagnostic,
    });
    a
}

fn numeric_rank(m: &DMatrix<f64>, n: usize) -> (usize, f64, Option<String>) {
    if m.is_empty() {
        return (0, 1.0, None);
    }
    let svd = m.clone().svd(false, true);
    let sigma = &svd.singular_values;
    let max = sigma.max();
    if max == 0.0 {
        return (0, 0.0, Some("reduced system matrix is identically zero".into()));
    }
    let rank = sigma.iter().filter(|&&s| s / max > RANK_TOLERANCE).count();
    let ratio = sigma.min() / max;
    if rank == m.nrows() {
        return (rank, ratio, None);
    }
    // Locate the state variable dominating the weakest right singular vector.
    let weakest = sigma.imin();
    let v_t = svd.v_t.expect("requested right singular vectors");
    let row = v_t.row(weakest);
    let (idx, _) = row
        .iter()
        .enumerate()
        .fold((0, 0.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
    let n3 = 3 * n;
    let kind = if idx < n3 { "magnitude" } else { "angle" };
    let local = idx % n3;
    let phase = ["a", "b", "c"][local / n];
    let node = local % n + 1;
    let diag = format!(
        "{} singular direction(s) below tolerance; weakest direction dominated by {kind} of phase {phase} at node index {node} (sigma ratio {ratio:e})",
        m.nrows() - rank
    );
    (rank, ratio, Some(diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{assemble_admittance, LineSection, ReducedNetwork};
    use nalgebra::Matrix3;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn line(id: &str, from: usize, to: usize, z: Matrix3<Complex64>) -> LineSection {
        LineSection {
            id: id.into(),
            from,
            to,
            z,
        }
    }

    fn coupled(zs: Complex64, zm: Complex64) -> Matrix3<Complex64> {
        Matrix3::from_fn(|r, col| if r == col { zs } else { zm })
    }

    fn net(nodes: usize, lines: Vec<LineSection>) -> ReducedNetwork {
        ReducedNetwork {
            base_voltage_v: 1.0,
            base_power_va: 1.0,
            nodes: (0..nodes).map(|i| i.to_string()).collect(),
            lines,
            loads: vec![],
        }
    }

    #[test]
    fn zero_admittance_gives_zero_blocks() {
        let y = AdmittanceMatrix {
            y: DMatrix::zeros(6, 6),
            nodes: 2,
        };
        let a = build_a(&y).unwrap();
        for b in [&a.a11, &a.a12, &a.a21, &a.a22] {
            assert!(b.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let y = AdmittanceMatrix {
            y: DMatrix::zeros(6, 6),
            nodes: 3,
        };
        assert!(matches!(build_a(&y), Err(Error::Dimension(_))));
    }

    #[test]
    fn blocks_annihilate_flat_direction() {
        let n = net(
            3,
            vec![
                line("1", 0, 1, coupled(c(0.02, 0.05), c(0.005, 0.02))),
                line("2", 1, 2, coupled(c(0.03, 0.04), c(0.01, 0.015))),
            ],
        );
        let a = build_a(&assemble_admittance(&n).unwrap()).unwrap();
        // the per-phase constant vectors lie in every block's null space
        for block in [&a.a11, &a.a12, &a.a21, &a.a22] {
            for p in 0..3 {
                let mut e = nalgebra::DVector::zeros(9);
                for k in 0..3 {
                    e[p * 3 + k] = 1.0;
                }
                assert!((block * &e).amax() < 1e-10);
            }
        }
        assert_eq!(a.a11, -&a.a22);
        assert_eq!(a.a12, a.a21);
    }

    #[test]
    fn matches_dense_similarity_transform() {
        let n = net(2, vec![line("1", 0, 1, coupled(c(0.02, 0.05), c(0.005, 0.02)))]);
        let y = assemble_admittance(&n).unwrap();
        let a = build_a(&y).unwrap();
        let alpha = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI / 3.0);
        let phi = DMatrix::from_fn(6, 6, |r, col| {
            if r == col {
                alpha.powi((r / 2) as i32)
            } else {
                c(0.0, 0.0)
            }
        });
        let phi_inv = phi.map(|v| if v.norm() > 0.0 { v.inv() } else { v });
        let g = &phi_inv * &y.y * &phi;
        for r in 0..6 {
            for col in 0..6 {
                assert!((a.a11[(r, col)] - g[(r, col)].re).abs() < 1e-12 * g[(r, col)].norm().max(1.0));
                assert!((a.a12[(r, col)] + g[(r, col)].im).abs() < 1e-12 * g[(r, col)].norm().max(1.0));
            }
        }
    }

    #[test]
    fn single_line_reduces_to_3x3_blocks() {
        let n = net(2, vec![line("1", 0, 1, coupled(c(0.02, 0.05), c(0.005, 0.02)))]);
        let a = remove_substation(build_a(&assemble_admittance(&n).unwrap()).unwrap());
        let r = a.reduced.unwrap();
        assert_eq!(r.matrix.shape(), (6, 6));
        assert_eq!(r.block(1, 0).shape(), (3, 3));
        assert!(r.is_full_rank());
        assert!(r.diagnostic.is_none());
    }

    #[test]
    fn cancelling_parallel_lines_isolate_a_phase() {
        // Two lines between nodes 1 and 2 whose phase-c admittances cancel
        // leave phase c of node 2 electrically floating.
        let zs = c(0.02, 0.04);
        let good = Matrix3::from_diagonal(&nalgebra::Vector3::new(zs, zs, zs));
        let cancel = Matrix3::from_diagonal(&nalgebra::Vector3::new(c(0.05, 0.1), c(0.05, 0.1), -zs));
        let n = net(
            3,
            vec![line("feed", 0, 1, good), line("dup1", 1, 2, good), line("dup2", 1, 2, cancel)],
        );
        let a = remove_substation(build_a(&assemble_admittance(&n).unwrap()).unwrap());
        let r = a.reduced.unwrap();
        assert!(r.rank < 6 * 2, "rank {}", r.rank);
        let diag = r.diagnostic.expect("diagnostic attached");
        assert!(diag.contains("phase c"), "{diag}");
        assert!(diag.contains("node index 2"), "{diag}");
    }
}
