//! Trainable parameter and the Adam update rule.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Adam hyperparameters. Only the learning rate is typically varied; the
/// moment coefficients are the usual defaults.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamParams {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// A tensor with Adam moment estimates. Gradients accumulate in the value
/// tensor's grad slot during backward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
    pub step_count: u64,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let first_moment = Tensor::zeros(value.shape().to_vec());
        let second_moment = Tensor::zeros(value.shape().to_vec());
        Self {
            value,
            first_moment,
            second_moment,
            step_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Applies one Adam step using the gradient accumulated in the value's
    /// grad slot, then clears it. No-op error if nothing was accumulated.
    pub fn step_with_accumulated(&mut self, hp: &AdamParams) -> Result<()> {
        let grad: Vec<f64> = self
            .value
            .grad()
            .ok_or_else(|| Error::InvalidArgument("no gradient accumulated".into()))?
            .to_vec();
        let grad = Tensor::new(self.value.shape().to_vec(), grad)?;
        adam_step(self, &grad, hp)?;
        self.value.clear_grad();
        Ok(())
    }
}

/// Bias-corrected Adam update. The parameter is untouched if the gradient
/// contains non-finite values.
pub fn adam_step(param: &mut Parameter, grad: &Tensor, hp: &AdamParams) -> Result<()> {
    if grad.shape() != param.value.shape() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "gradient shape {:?} does not match parameter shape {:?}",
                grad.shape(),
                param.value.shape()
            ),
        ));
    }
    if !grad.all_finite() {
        return Err(Error::NonFinite("gradient passed to adam_step".into()));
    }

    param.step_count += 1;
    let t = param.step_count as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);

    let m = param.first_moment.data_mut();
    let v = param.second_moment.data_mut();
    let p = param.value.data_mut();
    let g = grad.data();
    for i in 0..p.len() {
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.epsilon);
    }
    Ok(())
}
