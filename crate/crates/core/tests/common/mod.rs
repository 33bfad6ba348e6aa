//! Shared test helpers: finite-difference oracles and small dataset builders.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use yearest::rng::derive_rng;
use yearest::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;

pub fn test_rng(seed: u64) -> ChaCha8Rng {
    derive_rng(seed, 7, 0)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale).collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, random_vec(rng, n, scale)).unwrap()
}

/// Central-difference gradient of a scalar function.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let hi = f(&probe);
        probe[i] = x[i] - h;
        let lo = f(&probe);
        probe[i] = x[i];
        grad[i] = (hi - lo) / (2.0 * h);
    }
    grad
}

/// Max elementwise deviation normalized by the gradient's overall scale:
/// max_i |a_i - n_i| / max(1, ||a||_inf, ||n||_inf).
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(1.0f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / scale)
        .fold(0.0, f64::max)
}
