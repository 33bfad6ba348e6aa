//! Layer primitives and the Adam optimizer for the regression networks.
//!
//! Forward passes return a per-layer cache so a whole minibatch can be run
//! before any backward pass; gradients accumulate into each parameter's grad
//! slot and are consumed by [`adam::adam_step`].

pub mod activation;
pub mod adam;
pub mod conv;
pub mod dense;
pub mod pool;

pub use activation::{Dropout, Relu};
pub use adam::{adam_step, AdamParams, Parameter};
pub use conv::Conv2d;
pub use dense::Dense;
pub use pool::{GlobalAvgPool, MaxPool2x2, MaxPoolCache};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv2d(Conv2d),
    Dense(Dense),
    Relu(Relu),
    MaxPool2x2(MaxPool2x2),
    GlobalAvgPool(GlobalAvgPool),
    Dropout(Dropout),
}

/// Whatever a layer needs to replay its backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Input(Tensor),
    ReluMask(Vec<bool>),
    MaxPool(MaxPoolCache),
    GapShape((usize, usize, usize)),
    DropoutMask(Option<Vec<f64>>),
}

impl Layer {
    pub fn forward(
        &self,
        input: &Tensor,
        mode: Mode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor, LayerCache)> {
        match self {
            Layer::Conv2d(l) => Ok((l.forward(input)?, LayerCache::Input(input.clone()))),
            Layer::Dense(l) => Ok((l.forward(input)?, LayerCache::Input(input.clone()))),
            Layer::Relu(l) => {
                let (out, mask) = l.forward(input);
                Ok((out, LayerCache::ReluMask(mask)))
            }
            Layer::MaxPool2x2(l) => {
                let (out, cache) = l.forward(input)?;
                Ok((out, LayerCache::MaxPool(cache)))
            }
            Layer::GlobalAvgPool(l) => {
                let (out, shape) = l.forward(input)?;
                Ok((out, LayerCache::GapShape(shape)))
            }
            Layer::Dropout(l) => match mode {
                Mode::Eval => Ok((input.clone(), LayerCache::DropoutMask(None))),
                Mode::Train => {
                    let rng = rng.ok_or_else(|| {
                        Error::InvalidArgument(
                            "dropout in training mode requires an rng".into(),
                        )
                    })?;
                    let (out, mask) = l.forward_train(input, rng);
                    Ok((out, LayerCache::DropoutMask(Some(mask))))
                }
            },
        }
    }

    pub fn backward(&mut self, cache: &LayerCache, grad_out: &Tensor) -> Result<Tensor> {
        match (self, cache) {
            (Layer::Conv2d(l), LayerCache::Input(x)) => l.backward(x, grad_out),
            (Layer::Dense(l), LayerCache::Input(x)) => l.backward(x, grad_out),
            (Layer::Relu(l), LayerCache::ReluMask(m)) => l.backward(m, grad_out),
            (Layer::MaxPool2x2(l), LayerCache::MaxPool(c)) => l.backward(c, grad_out),
            (Layer::GlobalAvgPool(l), LayerCache::GapShape(s)) => l.backward(*s, grad_out),
            (Layer::Dropout(l), LayerCache::DropoutMask(m)) => l.backward(m.as_deref(), grad_out),
            _ => Err(Error::InvalidArgument(
                "layer cache does not match layer type".into(),
            )),
        }
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        match self {
            Layer::Conv2d(l) => vec![&l.weights, &l.bias],
            Layer::Dense(l) => vec![&l.weights, &l.bias],
            _ => vec![],
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weights, &mut l.bias],
            _ => vec![],
        }
    }
}
