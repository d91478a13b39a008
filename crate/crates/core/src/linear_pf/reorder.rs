use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `perm[node_major] = phase_major` for `nodes` nodes.
pub fn node_order_permutation(nodes: usize) -> Vec<usize> {
    (0..3 * nodes)
        .map(|i| {
            let (node, phase) = (i / 3, i % 3);
            phase * nodes + node
        })
        .collect()
}

/// `out[i] = v[perm[i]]`.
pub fn permute<T: Clone>(v: &[T], perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&p| v[p].clone()).collect()
}

fn check(m: &DMatrix<f64>, nodes: usize) -> Result<()> {
    if !m.nrows().is_multiple_of(3) || !m.ncols().is_multiple_of(3) {
        return Err(Error::Dimension(format!(
            "{}x{} is not a multiple of 3",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() != 3 * nodes || m.ncols() != 3 * nodes {
        return Err(Error::Dimension(format!(
            "{}x{} does not match {nodes} nodes",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Phase-major to node-major reordering of a square matrix.
pub fn reorder_by_node(m: &DMatrix<f64>, nodes: usize) -> Result<DMatrix<f64>> {
    check(m, nodes)?;
    let perm = node_order_permutation(nodes);
    Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(perm[r], perm[c])]))
}

/// Inverse of [`reorder_by_node`].
pub fn reorder_by_phase(m: &DMatrix<f64>, nodes: usize) -> Result<DMatrix<f64>> {
    check(m, nodes)?;
    let perm = node_order_permutation(nodes);
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out[(perm[r], perm[c])] = m[(r, c)];
        }
    }
    Ok(out)
}
