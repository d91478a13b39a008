use nalgebra::DMatrix;

use super::reorder::{node_order_permutation, reorder_by_node};
use super::SystemMatrices;
use crate::error::{Error, Result};
use crate::exec::Exec;

/// `v = K p - L q`, `theta = K_theta p - L_theta q` (differences to the
/// substation, non-substation nodes only).
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityBlocks {
    pub k: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub k_theta: DMatrix<f64>,
    pub l_theta: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrices {
    pub n: usize,
    pub phase_ordered: SensitivityBlocks,
    pub node_ordered: SensitivityBlocks,
    /// `node_ordered[i] = phase_ordered[permutation[i]]`.
    pub permutation: Vec<usize>,
}

impl SensitivityMatrices {
    /// Applies the phase-ordered maps to phase-ordered injections, returning
    /// `(v_check, theta_check)`.
    pub fn apply(&self, p: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let s = &self.phase_ordered;
        let p = nalgebra::DVector::from_column_slice(p);
        let q = nalgebra::DVector::from_column_slice(q);
        let v = &s.k * &p - &s.l * &q;
        let t = &s.k_theta * &p - &s.l_theta * &q;
        (v.as_slice().to_vec(), t.as_slice().to_vec())
    }
}

/// Sensitivities from one LU factorization of the full reduced system.
pub fn sensitivities(a: &SystemMatrices) -> Result<SensitivityMatrices> {
    sensitivities_with(a, Exec::Sequential)
}

/// As [`sensitivities`]; with [`Exec::Parallel`] the unit right-hand sides are
/// solved in column chunks across threads against the shared factorization.
pub fn sensitivities_with(a: &SystemMatrices, exec: Exec) -> Result<SensitivityMatrices> {
    let reduced = a
        .reduced
        .as_ref()
        .ok_or_else(|| Error::Dimension("substation not removed from system matrices".into()))?;
    let dim = reduced.matrix.nrows();
    if !reduced.is_full_rank() {
        return Err(Error::RankDeficient {
            rank: reduced.rank,
            expected: dim,
            diagnostic: reduced.diagnostic.clone().unwrap_or_default(),
        });
    }
    let n = a.n();
    let n3 = 3 * n;
    let lu = reduced.matrix.clone().lu();

    const CHUNK: usize = 64;
    let chunks = dim.div_ceil(CHUNK);
    let solved = exec.try_map_range(chunks, |c| {
        let start = c * CHUNK;
        let width = CHUNK.min(dim - start);
        let rhs = DMatrix::from_fn(dim, width, |r, j| if r == start + j { 1.0 } else { 0.0 });
        lu.solve(&rhs).ok_or_else(|| Error::RankDeficient {
            rank: reduced.rank,
            expected: dim,
            diagnostic: "LU factorization is singular".into(),
        })
    })?;
    let mut inverse = DMatrix::<f64>::zeros(dim, dim);
    for (c, block) in solved.into_iter().enumerate() {
        inverse.columns_mut(c * CHUNK, block.ncols()).copy_from(&block);
    }

    let part = |r: usize, c: usize| inverse.view((r * n3, c * n3), (n3, n3)).into_owned();
    let phase_ordered = SensitivityBlocks {
        k: part(0, 0),
        k_theta: part(1, 0),
        l: -part(0, 1),
        l_theta: -part(1, 1),
    };
    let node_ordered = SensitivityBlocks {
        k: reorder_by_node(&phase_ordered.k, n)?,
        l: reorder_by_node(&phase_ordered.l, n)?,
        k_theta: reorder_by_node(&phase_ordered.k_theta, n)?,
        l_theta: reorder_by_node(&phase_ordered.l_theta, n)?,
    };
    Ok(SensitivityMatrices {
        n,
        phase_ordered,
        node_ordered,
        permutation: node_order_permutation(n),
    })
}
