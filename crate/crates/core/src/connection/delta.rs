//! Delta-connected (two-phase) load algebra.

use num_complex::Complex64;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Splits a line-to-line injection `P + jQ` into the phase-port injections
/// `(S_a, S_b)` under near-balanced voltages.
///
/// `S_b` is the remainder `S - S_a`, nudged by a few ulps where needed so
/// that `S_a + S_b` evaluates to `S` in floating point. When both parts lie
/// in a coarser binade than the total no such pair exists and the sum is
/// off by one unit in the last place of the parts.
pub fn split_delta_power(p: f64, q: f64) -> (Complex64, Complex64) {
    let (a_re, b_re) = conserving_pair(p, 0.5 * p + SQRT3 / 6.0 * q);
    let (a_im, b_im) = conserving_pair(q, 0.5 * q - SQRT3 / 6.0 * p);
    (Complex64::new(a_re, a_im), Complex64::new(b_re, b_im))
}

/// `(a, total - a)` with `a` moved by at most three ulps so that the two
/// parts add back to `total`.
fn conserving_pair(total: f64, a: f64) -> (f64, f64) {
    let b = total - a;
    if a + b == total || !total.is_finite() || !a.is_finite() {
        return (a, b);
    }
    let step = |x: f64, up: bool, k: usize| (0..k).fold(x, |x, _| if up { x.next_up() } else { x.next_down() });
    for da in 0..=3 {
        for a_up in [true, false] {
            let a2 = step(a, a_up, da);
            let b2 = total - a2;
            for db in 0..=2 {
                for b_up in [true, false] {
                    let b3 = step(b2, b_up, db);
                    if a2 + b3 == total {
                        return (a2, b3);
                    }
                }
            }
        }
    }
    (a, b)
}

/// Linearized change of the line-to-line magnitude across phases `i, j`
/// relative to the substation's.
#[allow(clippy::too_many_arguments)]
pub fn line_to_line_delta(
    v_i: f64,
    v_j: f64,
    theta_i: f64,
    theta_j: f64,
    v0_i: f64,
    v0_j: f64,
    theta0_i: f64,
    theta0_j: f64,
) -> f64 {
    let half_sqrt3 = 0.5 * SQRT3;
    half_sqrt3 * (v_i - v0_i) + half_sqrt3 * (v_j - v0_j) + 0.5 * (theta_i - theta0_i) - 0.5 * (theta_j - theta0_j)
}

/// Exact line-to-line magnitude `|v_i e^{j theta_i} - v_j e^{j theta_j}|`.
pub fn line_to_line_magnitude(v_i: f64, v_j: f64, theta_i: f64, theta_j: f64) -> f64 {
    (v_i * v_i + v_j * v_j - 2.0 * v_i * v_j * (theta_i - theta_j).cos()).sqrt()
}

/// Line-to-line magnitude of two phases assumed 120 degrees apart.
pub fn balanced_pair_magnitude(v_i: f64, v_j: f64) -> f64 {
    (v_i * v_i + v_j * v_j + v_i * v_j).sqrt()
}
