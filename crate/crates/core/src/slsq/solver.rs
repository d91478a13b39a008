use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::subproblem::SubproblemInstance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the gradient mapping falls to this level.
    pub tolerance: f64,
    /// Stop once one step lowers the objective by less than this fraction.
    pub relative_decrease: f64,
    /// Iteration cap; `None` means `30000 * M`.
    pub max_iterations: Option<usize>,
    /// Use FISTA with adaptive restart instead of Barzilai-Borwein steps.
    pub accelerated: bool,
    /// Record the objective after every iteration.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            relative_decrease: 1e-12,
            max_iterations: None,
            accelerated: false,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxedSolution {
    /// One simplex triple per other load.
    pub x: Vec<f64>,
    /// `(1/T) sum_t residual^2`, from the raw rows.
    pub objective: f64,
    /// Projected-gradient stationarity measure on the normalized problem.
    pub kkt_residual: f64,
    pub iterations: usize,
    /// All design rows vanish, every feasible point is optimal.
    pub degenerate: bool,
    /// Objective after each iteration (when requested).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
}

/// Euclidean projection of a 3-vector onto the unit simplex.
pub fn project_simplex3(v: [f64; 3]) -> [f64; 3] {
    let mut u = v;
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    [(v[0] - theta).max(0.0), (v[1] - theta).max(0.0), (v[2] - theta).max(0.0)]
}

fn project(x: &mut [f64]) {
    for tr in x.chunks_mut(3) {
        let p = project_simplex3([tr[0], tr[1], tr[2]]);
        tr.copy_from_slice(&p);
    }
}

/// `x^T G x - 2 b^T x + c` with `G`, `b`, `c` divided by a common scale.
struct Quadratic {
    g: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
    lipschitz: f64,
}

impl Quadratic {
    fn new(inst: &SubproblemInstance) -> Option<Self> {
        let t = inst.t() as f64;
        let d = inst.dim();
        let phi = &inst.design;
        let y = DVector::from_column_slice(&inst.target);
        let mut g = phi.tr_mul(phi) / t;
        let mut b = phi.tr_mul(&y) / t;
        let scale = g.trace() / d as f64;
        if !(scale > 0.0 && scale.is_finite()) {
            return None;
        }
        g /= scale;
        b /= scale;
        let c = y.norm_squared() / t / scale;
        let lipschitz = 2.0 * max_eigenvalue(&g);
        Some(Self { g, b, c, lipschitz })
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let gx = &self.g * x;
        x.dot(&gx) - 2.0 * self.b.dot(x) + self.c
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.g * x - &self.b) * 2.0
    }

    /// `max |x - P(x - grad / L)|`.
    fn mapping(&self, x: &DVector<f64>, grad: &DVector<f64>) -> f64 {
        let mut z: Vec<f64> = x.iter().zip(grad.iter()).map(|(a, g)| a - g / self.lipschitz).collect();
        project(&mut z);
        x.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

fn max_eigenvalue(g: &DMatrix<f64>) -> f64 {
    let d = g.nrows();
    let mut v = DVector::from_element(d, 1.0 / (d as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..300 {
        let w = g * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 1.0;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    // The Rayleigh quotient approaches the top eigenvalue from below.
    (lambda * 1.01).max(f64::MIN_POSITIVE)
}

/// Minimizes the quadratic restricted to the face where the currently
/// positive coordinates are free and the rest are fixed at zero.
fn face_polish(q: &Quadratic, x: &DVector<f64>) -> Option<DVector<f64>> {
    let d = x.len();
    let free: Vec<usize> = (0..d).filter(|&j| x[j] > 0.0).collect();
    let triples = d / 3;
    let nf = free.len();
    let dim = nf + triples;
    let mut kkt = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for (a, &ja) in free.iter().enumerate() {
        for (b, &jb) in free.iter().enumerate() {
            kkt[(a, b)] = 2.0 * q.g[(ja, jb)];
        }
        kkt[(a, nf + ja / 3)] = 1.0;
        kkt[(nf + ja / 3, a)] = 1.0;
        rhs[a] = 2.0 * q.b[ja];
    }
    for k in 0..triples {
        rhs[nf + k] = 1.0;
    }
    let svd = kkt.svd(true, true);
    let eps = 1e-12 * svd.singular_values.max();
    let sol = svd.solve(&rhs, eps).ok()?;
    let mut out = DVector::zeros(d);
    for (a, &j) in free.iter().enumerate() {
        if !sol[a].is_finite() || sol[a] < -1e-12 {
            return None;
        }
        out[j] = sol[a].max(0.0);
    }
    let mut v = out.as_slice().to_vec();
    project(&mut v);
    Some(DVector::from_vec(v))
}

struct State {
    x: DVector<f64>,
    f: f64,
    grad: DVector<f64>,
    gm: f64,
}

impl State {
    fn at(q: &Quadratic, x: DVector<f64>) -> Self {
        let f = q.value(&x);
        let grad = q.gradient(&x);
        let gm = q.mapping(&x, &grad);
        Self { x, f, grad, gm }
    }
}

/// Replaces `s` by its face-polished version when that is no worse.
fn try_polish(q: &Quadratic, s: &mut State) -> bool {
    let Some(x) = face_polish(q, &s.x) else {
        return false;
    };
    let cand = State::at(q, x);
    let slack = 1e-14 * s.f.abs().max(q.c.abs());
    if cand.f < s.f || (cand.f <= s.f + slack && cand.gm <= s.gm) {
        *s = cand;
        true
    } else {
        false
    }
}

const ARMIJO: f64 = 1e-4;
const POLISH_EVERY: usize = 50;

pub fn solve_relaxed(inst: &SubproblemInstance) -> Result<RelaxedSolution> {
    solve_relaxed_with(inst, &SolverOptions::default())
}

pub fn solve_relaxed_with(inst: &SubproblemInstance, opts: &SolverOptions) -> Result<RelaxedSolution> {
    let d = inst.dim();
    let x0 = DVector::from_element(d, 1.0 / 3.0);
    if d == 0 {
        return Ok(RelaxedSolution {
            objective: inst.objective(&[]),
            x: vec![],
            kkt_residual: 0.0,
            iterations: 0,
            degenerate: false,
            trace: vec![],
        });
    }
    let Some(q) = Quadratic::new(inst) else {
        return Ok(RelaxedSolution {
            objective: inst.objective(x0.as_slice()),
            x: x0.as_slice().to_vec(),
            kkt_residual: 0.0,
            iterations: 0,
            degenerate: true,
            trace: vec![],
        });
    };
    let cap = opts.max_iterations.unwrap_or(30_000 * (d / 3 + 1));
    let mut s = State::at(&q, x0);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut alpha = 1.0 / q.lipschitz;
    // FISTA extrapolation point and momentum.
    let mut y = s.x.clone();
    let mut momentum: f64 = 1.0;
    let mut restarts = 0;

    loop {
        if s.gm <= opts.tolerance {
            try_polish(&q, &mut s);
            break;
        }
        if iterations >= cap {
            return Err(Error::SolverDivergence {
                load: inst.m,
                phase: inst.i,
                iterations,
                best_objective: inst.objective(s.x.as_slice()),
                best: s.x.as_slice().to_vec(),
            });
        }
        iterations += 1;

        let next = if opts.accelerated {
            let gy = q.gradient(&y);
            let mut z: Vec<f64> = y.iter().zip(gy.iter()).map(|(a, g)| a - g / q.lipschitz).collect();
            project(&mut z);
            let cand = State::at(&q, DVector::from_vec(z));
            if cand.f > s.f {
                momentum = 1.0;
                y = s.x.clone();
                None
            } else {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
                y = &cand.x + (&cand.x - &s.x) * ((momentum - 1.0) / t_next);
                momentum = t_next;
                Some(cand)
            }
        } else {
            let mut accepted = None;
            let min_alpha = 1e-14 / q.lipschitz;
            while alpha >= min_alpha {
                let mut z: Vec<f64> = s.x.iter().zip(s.grad.iter()).map(|(a, g)| a - alpha * g).collect();
                project(&mut z);
                let z = DVector::from_vec(z);
                let f = q.value(&z);
                if f <= s.f + ARMIJO * s.grad.dot(&(&z - &s.x)) {
                    accepted = Some(State::at(&q, z));
                    break;
                }
                alpha *= 0.5;
            }
            if let Some(c) = &accepted {
                let step = &c.x - &s.x;
                let dg = &c.grad - &s.grad;
                let sy = step.dot(&dg);
                alpha = if sy > 0.0 {
                    (step.norm_squared() / sy).clamp(1e-3 / q.lipschitz, 1e6 / q.lipschitz)
                } else {
                    1.0 / q.lipschitz
                };
            } else {
                alpha = 1.0 / q.lipschitz;
            }
            accepted
        };

        let stalled = match next {
            Some(n) => {
                restarts = 0;
                let decrease = s.f - n.f;
                let stalled = decrease <= opts.relative_decrease * s.f.abs().max(f64::MIN_POSITIVE)
                    && !opts.accelerated;
                s = n;
                stalled
            }
            None if opts.accelerated => {
                restarts += 1;
                restarts > 1
            }
            None => true,
        };
        if opts.trace {
            trace.push(inst.objective(s.x.as_slice()));
        }
        if stalled {
            let improved = try_polish(&q, &mut s);
            if !improved || s.gm <= opts.tolerance {
                break;
            }
            y = s.x.clone();
        } else if iterations % POLISH_EVERY == 0 && try_polish(&q, &mut s) {
            y = s.x.clone();
            momentum = 1.0;
        }
    }

    Ok(RelaxedSolution {
        objective: inst.objective(s.x.as_slice()),
        x: s.x.as_slice().to_vec(),
        kkt_residual: s.gm,
        iterations,
        degenerate: false,
        trace,
    })
}
