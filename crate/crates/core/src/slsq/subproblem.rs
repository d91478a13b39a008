use nalgebra::DMatrix;

use crate::connection::{DifferencedSeries, ReducedSensitivity};
use crate::error::{Error, Result};

/// Regression form of one marginal subproblem: minimize
/// `(1/T) sum_t (target(t) - design(t, :) x)^2` over the other loads'
/// decision triples.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemInstance {
    /// Target load.
    pub m: usize,
    /// Phase option fixed for the target load.
    pub i: usize,
    /// `v_tot(t)`, length T.
    pub target: Vec<f64>,
    /// `phi(t)` as rows, T x 3(M - 1).
    pub design: DMatrix<f64>,
    /// Load index of each triple of columns.
    pub others: Vec<usize>,
}

impl SubproblemInstance {
    pub fn t(&self) -> usize {
        self.target.len()
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    /// Objective evaluated row by row from the raw data.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let t_len = self.t();
        let d = self.dim();
        let mut sum = 0.0;
        for t in 0..t_len {
            let fit: f64 = (0..d).map(|j| self.design[(t, j)] * x[j]).sum();
            let r = self.target[t] - fit;
            sum += r * r;
        }
        sum / t_len as f64
    }

    /// Objective at a binary point given as one phase per other load.
    pub fn objective_at_phases(&self, phases: &[usize]) -> f64 {
        let t_len = self.t();
        let mut sum = 0.0;
        for t in 0..t_len {
            let mut fit = 0.0;
            for (k, &j) in phases.iter().enumerate() {
                fit += self.design[(t, 3 * k + j)];
            }
            let r = self.target[t] - fit;
            sum += r * r;
        }
        sum / t_len as f64
    }
}

/// Builds the subproblem for load `m` with phase option `i`; rows of each
/// segment use that segment's sensitivity set.
pub fn build_subproblem(
    m: usize,
    i: usize,
    ds: &DifferencedSeries,
    rs: &[ReducedSensitivity],
) -> Result<SubproblemInstance> {
    let big_m = ds.m();
    if m >= big_m || i >= 3 {
        return Err(Error::Dimension(format!("subproblem ({m}, {i}) with {big_m} loads")));
    }
    if rs.len() < ds.topologies() || rs.iter().any(|r| r.m() != big_m) {
        return Err(Error::Dimension("sensitivity sets do not match the series".into()));
    }
    let row = 3 * m + i;
    for r in rs {
        let finite = (0..3 * big_m).all(|c| r.k_hat[(row, c)].is_finite() && r.l_hat[(row, c)].is_finite());
        if !finite {
            return Err(Error::Dimension(format!("non-finite sensitivity row for load {m}, phase {i}")));
        }
    }
    let others: Vec<usize> = (0..big_m).filter(|&k| k != m).collect();
    let t_len = ds.t();
    let mut design = DMatrix::zeros(t_len, 3 * others.len());
    let mut target = vec![0.0; t_len];
    for seg in &ds.segments {
        let r = &rs[seg.topology];
        for t in seg.range.clone() {
            let eta = r.k_hat[(row, row)] * ds.p[m][t] + r.l_hat[(row, row)] * ds.q[m][t];
            target[t] = ds.v[m][t] - ds.reference(m, i, t) - eta;
            for (c, &k) in others.iter().enumerate() {
                for j in 0..3 {
                    let col = 3 * k + j;
                    design[(t, 3 * c + j)] = r.k_hat[(row, col)] * ds.p[k][t] + r.l_hat[(row, col)] * ds.q[k][t];
                }
            }
        }
    }
    Ok(SubproblemInstance {
        m,
        i,
        target,
        design,
        others,
    })
}
