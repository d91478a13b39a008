//! Per-load binary least-squares subproblems, their simplex relaxation,
//! rounding, and an enumeration oracle.

mod solver;
mod subproblem;

pub use solver::{project_simplex3, solve_relaxed, solve_relaxed_with, RelaxedSolution, SolverOptions};
pub use subproblem::{build_subproblem, SubproblemInstance};

use crate::error::{Error, Result};

/// Largest number of free loads [`brute_force`] will enumerate.
pub const BRUTE_FORCE_MAX_LOADS: usize = 7;

/// Index of the largest entry of each triple; ties go to the lower index.
pub fn rounded_phases(x: &[f64]) -> Vec<usize> {
    x.chunks(3)
        .map(|t| {
            let mut best = 0;
            for j in 1..3 {
                if t[j] > t[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Binary vector with a single 1 per triple at the rounded position.
pub fn round_solution(rel: &RelaxedSolution) -> Vec<f64> {
    phases_to_binary(&rounded_phases(&rel.x))
}

pub fn phases_to_binary(phases: &[usize]) -> Vec<f64> {
    phases
        .iter()
        .flat_map(|&j| {
            let mut t = [0.0; 3];
            t[j] = 1.0;
            t
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceSolution {
    pub phases: Vec<usize>,
    pub x: Vec<f64>,
    pub objective: f64,
}

/// Exact minimizer over all binary points; the first minimizer in
/// lexicographic order of the phase indices wins.
pub fn brute_force(inst: &SubproblemInstance) -> Result<BruteForceSolution> {
    let k = inst.dim() / 3;
    if k > BRUTE_FORCE_MAX_LOADS {
        return Err(Error::TooLarge(k, BRUTE_FORCE_MAX_LOADS));
    }
    let total = 3usize.pow(k as u32);
    let mut phases = vec![0usize; k];
    let mut best = (f64::INFINITY, phases.clone());
    for code in 0..total {
        let mut c = code;
        for slot in phases.iter_mut().rev() {
            *slot = c % 3;
            c /= 3;
        }
        let f = inst.objective_at_phases(&phases);
        if f < best.0 {
            best = (f, phases.clone());
        }
    }
    Ok(BruteForceSolution {
        x: phases_to_binary(&best.1),
        phases: best.1,
        objective: best.0,
    })
}
