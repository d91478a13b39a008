use nalgebra::Matrix3;
use num_complex::Complex64;
use rand::Rng;

use super::noise::{gaussian, noise_sigma};
use crate::error::{Error, Result};
use crate::feeder::FeederModel;

const MAX_RESAMPLES: usize = 100;

/// Copy of `model` without the listed service branches and with every line
/// admittance entry scaled by `1 + eps`, `eps` Gaussian with three-sigma
/// equal to `fraction`. Symmetric entries share one draw.
pub fn perturb_model<R: Rng + ?Sized>(
    model: &FeederModel,
    fraction: f64,
    missing_branches: &[String],
    rng: &mut R,
) -> Result<FeederModel> {
    if !(fraction >= 0.0) {
        return Err(Error::NonPositive {
            what: "perturbation fraction",
            value: fraction,
        });
    }
    let mut out = model.without_branches(missing_branches)?;
    if fraction == 0.0 {
        return Ok(out);
    }
    let sigma = noise_sigma(fraction, 1.0);
    for line in &mut out.lines {
        let y = line
            .z
            .try_inverse()
            .ok_or_else(|| Error::SingularImpedance(line.id.clone()))?;
        let mut done = false;
        for _ in 0..MAX_RESAMPLES {
            let mut scaled = y;
            for r in 0..3 {
                for c in r..3 {
                    let f = 1.0 + gaussian(rng, sigma);
                    scaled[(r, c)] = y[(r, c)] * f;
                    scaled[(c, r)] = y[(c, r)] * f;
                }
            }
            if let Some(z) = invert_checked(&scaled) {
                line.z = z;
                done = true;
                break;
            }
        }
        if !done {
            return Err(Error::SingularImpedance(line.id.clone()));
        }
    }
    out.validate()?;
    Ok(out)
}

fn invert_checked(y: &Matrix3<Complex64>) -> Option<Matrix3<Complex64>> {
    let z = y.try_inverse()?;
    let cond = y.norm() * z.norm();
    (cond.is_finite() && cond < 1e12).then_some(z)
}
