//! Linearized three-phase power flow around the flat balanced solution,
//! voltage sensitivities, and a nonlinear fixed-point solver used as ground
//! truth.
//!
//! Phase-ordered vectors stack all nodes of phase a, then b, then c.
//! Node-ordered vectors stack the three phases of node 1, then node 2, and so
//! on.

mod dump;
mod nonlinear;
mod reorder;
mod sensitivity;
mod system;

pub use dump::{read_matrix_binary, read_matrix_csv, write_matrix, MatrixFormat};
pub use nonlinear::{solve_nonlinear_pf, PowerFlowOptions, PowerFlowSolution, PowerFlowSolver};
pub use reorder::{node_order_permutation, permute, reorder_by_node, reorder_by_phase};
pub use sensitivity::{sensitivities, sensitivities_with, SensitivityBlocks, SensitivityMatrices};
pub use system::{build_a, remove_substation, FlatSolution, ReducedSystem, SystemMatrices, RANK_TOLERANCE};

use num_complex::Complex64;
use std::f64::consts::PI;

/// `alpha = exp(-j 2 pi / 3)` raised to `k`.
pub fn alpha_pow(k: i32) -> Complex64 {
    match k.rem_euclid(3) {
        0 => Complex64::new(1.0, 0.0),
        r => Complex64::from_polar(1.0, -2.0 * PI * r as f64 / 3.0),
    }
}

/// Balanced phasors `v * (1, alpha, alpha^2)`.
pub fn balanced(v: [f64; 3]) -> [Complex64; 3] {
    [
        alpha_pow(0) * v[0],
        alpha_pow(1) * v[1],
        alpha_pow(2) * v[2],
    ]
}
