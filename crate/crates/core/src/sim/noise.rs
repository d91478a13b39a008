use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Rounds to the nearest multiple of `step`; `step <= 0` leaves `x` as is.
///
/// Steps below one are applied as `round(x * k) / k` with `k = 1 / step`,
/// which keeps the operation idempotent in floating point.
pub fn quantize(x: f64, step: f64) -> f64 {
    if !(step > 0.0) || !x.is_finite() {
        return x;
    }
    if step < 1.0 {
        let k = (1.0 / step).round();
        (x * k).round() / k
    } else {
        (x / step).round() * step
    }
}

/// Standard deviation of a Gaussian whose three-sigma band is
/// `fraction * nominal`.
pub fn noise_sigma(fraction: f64, nominal: f64) -> f64 {
    fraction * nominal / 3.0
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

/// `tan(acos(pf))`, the reactive-to-real power ratio of a lagging load.
pub fn reactive_ratio(pf: f64) -> f64 {
    pf.acos().tan()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(2401.49, 1.0), 2401.0);
        assert_eq!(quantize(240.06, 0.1), 240.1);
        assert_eq!(quantize(-12.34, 0.1), -12.3);
        assert_eq!(quantize(1.234, 0.0), 1.234);
    }

    #[test]
    fn power_factor_identity() {
        assert_eq!(0.9 * reactive_ratio(1.0), 0.0);
        assert!((0.9 * reactive_ratio(0.9) - 0.43589).abs() < 1e-5);
    }

    #[test]
    fn noise_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sigma = noise_sigma(0.001, 1.0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| gaussian(&mut rng, sigma)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((sd / (0.001 / 3.0) - 1.0).abs() < 0.05, "sd {sd}");
    }

    proptest! {
        #[test]
        fn quantize_is_idempotent(x in -1e5f64..1e5, step in prop::sample::select(vec![0.1, 1.0, 0.01, 0.5])) {
            let once = quantize(x, step);
            prop_assert_eq!(quantize(once, step), once);
        }
    }
}
