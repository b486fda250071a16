use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::seed;
use crate::Scalar;

/// Feature-noise augmentation: each element is perturbed independently with
/// probability `p` by Gaussian noise of standard deviation `sigma`, clipped
/// to `±3·sigma`.
pub fn apply_noise<T: Scalar>(x: &Array2<T>, p: f64, sigma: f64, seed: u64) -> Array2<T> {
    apply_noise_with(x, p, sigma, &mut seed::rng(seed))
}

pub fn apply_noise_with<T: Scalar, R: Rng + ?Sized>(
    x: &Array2<T>,
    p: f64,
    sigma: f64,
    rng: &mut R,
) -> Array2<T> {
    let mut out = x.clone();
    if p <= 0.0 || sigma <= 0.0 {
        return out;
    }
    let clip = 3.0 * sigma;
    for v in out.iter_mut() {
        if rng.random::<f64>() < p {
            let z: f64 = StandardNormal.sample(rng);
            *v += T::lit((sigma * z).clamp(-clip, clip));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch() -> Array2<f64> {
        Array2::from_shape_fn((64, 7), |(i, j)| (i as f64 * 0.37 - j as f64).sin())
    }

    #[test]
    fn zero_probability_is_identity() {
        let x = batch();
        assert_eq!(apply_noise(&x, 0.0, 0.1, 1), x);
    }

    #[test]
    fn zero_sigma_is_identity() {
        let x = batch();
        assert_eq!(apply_noise(&x, 0.7, 0.0, 1), x);
    }

    #[test]
    fn perturbation_respects_clip() {
        let x = batch();
        for seed in 0..20 {
            let y = apply_noise(&x, 1.0, 0.1, seed);
            let max = (&y - &x).iter().fold(0.0f64, |m, d| m.max(d.abs()));
            assert!(max <= 0.3 + 1e-12, "seed {seed}: {max}");
        }
    }

    #[test]
    fn empirical_mask_rate_and_std() {
        let x = Array2::<f64>::zeros((1000, 1000));
        let y = apply_noise(&x, 0.3, 0.1, 2024);
        let masked: Vec<f64> = y.iter().copied().filter(|v| *v != 0.0).collect();
        let rate = masked.len() as f64 / 1e6;
        assert!((rate - 0.3).abs() < 0.01, "mask rate {rate}");
        // Clipping at 3σ removes 0.27% of mass; restrict to the unclipped region.
        let inner: Vec<f64> = masked.iter().copied().filter(|v| v.abs() < 0.3).collect();
        let n = inner.len() as f64;
        let mean = inner.iter().sum::<f64>() / n;
        let std = (inner.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        // truncated-normal std at ±3σ is 0.98658σ; allow ±5% around σ
        assert!((std - 0.1).abs() < 0.005, "std {std}");
    }
}
