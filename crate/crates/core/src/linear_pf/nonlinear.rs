//! Fixed-point current-injection load flow on the reduced network.

use nalgebra::{DMatrix, DVector, LU, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::feeder::{assemble_admittance, ReducedNetwork};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    /// Converged once the largest voltage update falls below this (pu).
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    /// Phase-ordered voltages of all N + 1 nodes, substation included.
    pub voltages: Vec<Complex64>,
    pub iterations: usize,
    /// Largest nodal power mismatch at the returned point (pu).
    pub mismatch: f64,
}

impl PowerFlowSolution {
    pub fn voltage(&self, nodes: usize, phase: usize, node: usize) -> Complex64 {
        self.voltages[phase * nodes + node]
    }
}

/// Holds the factorized load-node admittance block so that many operating
/// points can be solved against the same network.
pub struct PowerFlowSolver {
    nodes: usize,
    lu: LU<Complex64, Dyn, Dyn>,
    y_ll: DMatrix<Complex64>,
    y_l0: DMatrix<Complex64>,
    options: PowerFlowOptions,
}

impl PowerFlowSolver {
    pub fn new(net: &ReducedNetwork) -> Result<Self> {
        Self::with_options(net, PowerFlowOptions::default())
    }

    pub fn with_options(net: &ReducedNetwork, options: PowerFlowOptions) -> Result<Self> {
        let y = assemble_admittance(net)?;
        let nodes = y.nodes;
        let load_idx: Vec<usize> = (0..3).flat_map(|p| (1..nodes).map(move |k| p * nodes + k)).collect();
        let y_ll = DMatrix::from_fn(load_idx.len(), load_idx.len(), |r, c| y.y[(load_idx[r], load_idx[c])]);
        let y_l0 = DMatrix::from_fn(load_idx.len(), 3, |r, p| y.y[(load_idx[r], p * nodes)]);
        let lu = y_ll.clone().lu();
        if lu.determinant().norm() == 0.0 {
            return Err(Error::Simulation("load-node admittance block is singular".into()));
        }
        Ok(Self {
            nodes,
            lu,
            y_ll,
            y_l0,
            options,
        })
    }

    pub fn n(&self) -> usize {
        self.nodes - 1
    }

    /// Constant-power injections, phase-ordered over non-substation nodes
    /// (`phase * N + node - 1`), generation positive.
    pub fn solve(&self, injections: &[Complex64], substation: [Complex64; 3]) -> Result<PowerFlowSolution> {
        let n3 = 3 * self.n();
        if injections.len() != n3 {
            return Err(Error::Dimension(format!(
                "{} injections for {} node-phases",
                injections.len(),
                n3
            )));
        }
        if injections.iter().any(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::Simulation("non-finite injection".into()));
        }
        self.solve_with(substation, |v, current| {
            for ((i, s), v) in current.iter_mut().zip(injections).zip(v) {
                *i = (s / v).conj();
            }
        })
    }

    /// General form: `currents(v, out)` writes the injected current at every
    /// non-substation node-phase given the present voltages.
    pub fn solve_with<F>(&self, substation: [Complex64; 3], mut currents: F) -> Result<PowerFlowSolution>
    where
        F: FnMut(&[Complex64], &mut [Complex64]),
    {
        if substation.iter().any(|v| v.norm() == 0.0) {
            return Err(Error::Simulation("substation voltage must be nonzero on every phase".into()));
        }
        let n = self.n();
        let n3 = 3 * n;
        let v0 = DVector::from_column_slice(&substation);
        let source = &self.y_l0 * &v0;
        let mut v: Vec<Complex64> = (0..n3).map(|i| substation[i / n]).collect();
        let mut current = vec![Complex64::new(0.0, 0.0); n3];

        let mut last_update = f64::INFINITY;
        for iteration in 1..=self.options.max_iterations {
            currents(&v, &mut current);
            let rhs = DVector::from_iterator(n3, current.iter().zip(source.iter()).map(|(i, s)| i - s));
            let next = self
                .lu
                .solve(&rhs)
                .ok_or_else(|| Error::Simulation("load-node admittance block is singular".into()))?;
            last_update = next.iter().zip(&v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            v.copy_from_slice(next.as_slice());
            if !last_update.is_finite() {
                break;
            }
            if last_update < self.options.tolerance {
                currents(&v, &mut current);
                let vv = DVector::from_column_slice(&v);
                let injected = &self.y_ll * &vv + &source;
                let mismatch = v
                    .iter()
                    .zip(injected.iter().zip(&current))
                    .map(|(v, (net, load))| (v * (net - load).conj()).norm())
                    .fold(0.0, f64::max);
                let mut voltages = Vec::with_capacity(3 * self.nodes);
                for p in 0..3 {
                    voltages.push(substation[p]);
                    voltages.extend_from_slice(&v[p * n..(p + 1) * n]);
                }
                return Ok(PowerFlowSolution {
                    voltages,
                    iterations: iteration,
                    mismatch,
                });
            }
        }
        Err(Error::PowerFlowDivergence {
            iterations: self.options.max_iterations,
            last_update,
        })
    }
}

/// One-shot nonlinear power flow with constant-power injections.
pub fn solve_nonlinear_pf(
    net: &ReducedNetwork,
    injections: &[Complex64],
    substation: [Complex64; 3],
) -> Result<PowerFlowSolution> {
    PowerFlowSolver::new(net)?.solve(injections, substation)
}
