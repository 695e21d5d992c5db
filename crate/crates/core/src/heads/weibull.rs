//! Two-parameter Weibull maximum likelihood.
//!
//! The shape `k` solves
//! `sum(x^k ln x) / sum(x^k) - 1/k - mean(ln x) = 0`, which is increasing in
//! `k`; it is found by Newton iteration kept inside a sign-change bracket
//! (bisection whenever a step leaves it), seeded from the moment-based
//! approximation `k0 = cv^-1.086`. The scale follows in closed form as
//! `(mean(x^k))^(1/k)`.

use crate::error::{Error, Result};

pub const MAX_SHAPE: f64 = 1e3;
const MIN_SHAPE: f64 = 1e-3;
const MAX_ITER: usize = 200;
const TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullFit {
    pub shape: f64,
    pub scale: f64,
    pub iterations: usize,
}

/// Sums needed by the shape equation on data normalized to max 1.
fn moments(y: &[f64], ln_y: &[f64], k: f64) -> (f64, f64, f64) {
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (&yi, &li) in y.iter().zip(ln_y) {
        let p = yi.powf(k);
        s0 += p;
        s1 += p * li;
        s2 += p * li * li;
    }
    (s0, s1, s2)
}

pub fn fit_weibull_mle(data: &[f64]) -> Result<WeibullFit> {
    if data.len() < 2 {
        return Err(Error::Invalid("Weibull fit needs at least two samples".into()));
    }
    if data.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Invalid("Weibull fit needs positive finite samples".into()));
    }
    let n = data.len() as f64;
    let max = data.iter().copied().fold(f64::MIN, f64::max);
    let min = data.iter().copied().fold(f64::MAX, f64::min);
    if (max - min) <= max * 1e-12 {
        return Ok(WeibullFit {
            shape: MAX_SHAPE,
            scale: max,
            iterations: 0,
        });
    }
    let y: Vec<f64> = data.iter().map(|&x| x / max).collect();
    let ln_y: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mean_ln = ln_y.iter().sum::<f64>() / n;

    let g = |k: f64| {
        let (s0, s1, s2) = moments(&y, &ln_y, k);
        let val = s1 / s0 - 1.0 / k - mean_ln;
        let deriv = (s2 * s0 - s1 * s1) / (s0 * s0) + 1.0 / (k * k);
        (val, deriv)
    };

    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let cv = var.sqrt() / mean;
    let mut k = cv.powf(-1.086).clamp(0.05, 100.0);

    let (mut lo, mut hi) = (MIN_SHAPE, k.max(1.0));
    while g(hi).0 < 0.0 {
        if hi >= MAX_SHAPE {
            let scale = max * (y.iter().map(|v| v.powf(MAX_SHAPE)).sum::<f64>() / n).powf(1.0 / MAX_SHAPE);
            return Ok(WeibullFit { shape: MAX_SHAPE, scale, iterations: 0 });
        }
        lo = hi;
        hi = (hi * 2.0).min(MAX_SHAPE);
    }
    if k <= lo || k >= hi {
        k = 0.5 * (lo + hi);
    }
    let mut iterations = 0;
    for it in 1..=MAX_ITER {
        iterations = it;
        let (val, deriv) = g(k);
        if val < 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let mut next = k - val / deriv;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let done = (next - k).abs() <= TOL * k.max(1.0);
        k = next;
        if done || hi - lo <= TOL * k {
            break;
        }
    }
    let scale = max * (y.iter().map(|v| v.powf(k)).sum::<f64>() / n).powf(1.0 / k);
    Ok(WeibullFit {
        shape: k,
        scale,
        iterations,
    })
}

pub fn weibull_cdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        1.0 - (-(x / scale).powf(shape)).exp()
    }
}

/// Log-likelihood of positive data under Weibull(shape, scale).
pub fn log_likelihood(data: &[f64], shape: f64, scale: f64) -> f64 {
    data.iter()
        .map(|&x| (shape / scale).ln() + (shape - 1.0) * (x / scale).ln() - (x / scale).powf(shape))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn draws(shape: f64, scale: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                scale * (-(1.0 - u).ln()).powf(1.0 / shape)
            })
            .collect()
    }

    #[test]
    fn recovers_parameters_of_synthetic_draws() {
        for (shape, scale, seed) in [(2.0, 1.0, 1), (0.8, 3.0, 2), (5.0, 0.01, 3)] {
            let fit = fit_weibull_mle(&draws(shape, scale, 1000, seed)).unwrap();
            assert!((fit.shape / shape - 1.0).abs() < 0.1, "{fit:?}");
            assert!((fit.scale / scale - 1.0).abs() < 0.1, "{fit:?}");
        }
    }

    #[test]
    fn fit_is_a_likelihood_maximum() {
        let data = draws(1.7, 2.5, 300, 9);
        let fit = fit_weibull_mle(&data).unwrap();
        let best = log_likelihood(&data, fit.shape, fit.scale);
        for dk in [-0.01, 0.01] {
            for dl in [-0.01, 0.0, 0.01] {
                let ll = log_likelihood(&data, fit.shape * (1.0 + dk), fit.scale * (1.0 + dl));
                assert!(ll <= best + 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let fit = fit_weibull_mle(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(fit.shape, MAX_SHAPE);
        assert!(fit_weibull_mle(&[1.0]).is_err());
        assert!(fit_weibull_mle(&[1.0, 0.0]).is_err());
        assert!(fit_weibull_mle(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn cdf_is_monotone_and_zero_at_origin() {
        assert_eq!(weibull_cdf(0.0, 2.0, 1.0), 0.0);
        assert_eq!(weibull_cdf(-1.0, 2.0, 1.0), 0.0);
        let mut prev = 0.0;
        for i in 1..100 {
            let c = weibull_cdf(i as f64 * 0.05, 1.3, 1.0);
            assert!(c >= prev && c <= 1.0);
            prev = c;
        }
    }
}
