//! ReLU and inverted dropout.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Default)]
pub struct Relu;

impl Relu {
    pub fn forward(&self, input: &Tensor) -> (Tensor, Vec<bool>) {
        let mask: Vec<bool> = input.data().iter().map(|&v| v > 0.0).collect();
        let out: Vec<f64> = input.data().iter().map(|&v| v.max(0.0)).collect();
        (
            Tensor::new(input.shape().to_vec(), out).expect("shape preserved"),
            mask,
        )
    }

    pub fn backward(&self, mask: &[bool], grad_out: &Tensor) -> Result<Tensor> {
        if mask.len() != grad_out.len() {
            return Err(Error::shape(
                "relu backward",
                format!("grad has {} elements, mask {}", grad_out.len(), mask.len()),
            ));
        }
        let data: Vec<f64> = grad_out
            .data()
            .iter()
            .zip(mask)
            .map(|(&g, &m)| if m { g } else { 0.0 })
            .collect();
        Tensor::new(grad_out.shape().to_vec(), data)
    }
}

/// Inverted dropout: in training, each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); evaluation is the identity,
/// so expected activations match between modes.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        Ok(Self { rate })
    }

    /// Training-mode forward. The returned mask holds the per-element scale
    /// factors (0 or 1/(1-rate)) reused by the backward pass.
    pub fn forward_train(&self, input: &Tensor, rng: &mut ChaCha8Rng) -> (Tensor, Vec<f64>) {
        let keep_scale = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = input
            .data()
            .iter()
            .map(|_| {
                if rng.random::<f64>() < self.rate {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        let out: Vec<f64> = input.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        (
            Tensor::new(input.shape().to_vec(), out).expect("shape preserved"),
            mask,
        )
    }

    pub fn backward(&self, mask: Option<&[f64]>, grad_out: &Tensor) -> Result<Tensor> {
        match mask {
            None => Ok(grad_out.clone()), // eval mode was identity
            Some(m) => {
                if m.len() != grad_out.len() {
                    return Err(Error::shape(
                        "dropout backward",
                        format!("grad has {} elements, mask {}", grad_out.len(), m.len()),
                    ));
                }
                let data: Vec<f64> =
                    grad_out.data().iter().zip(m).map(|(g, s)| g * s).collect();
                Tensor::new(grad_out.shape().to_vec(), data)
            }
        }
    }
}
