//! The two regressor architectures, assembled from layer primitives.
//!
//! Both end in a linear single-node output: targets are normalized years and
//! the raw regression value is never clamped here. ReLU is applied to hidden
//! fully-connected layers only.

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Dense, Dropout, GlobalAvgPool, Layer, LayerCache, MaxPool2x2, Mode, Parameter, Relu};
use crate::rng::{derive_rng, STREAM_INIT};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Architecture description, enough to rebuild a network skeleton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArchSpec {
    /// Conv blocks (3x3 conv -> ReLU -> 2x2 maxpool) followed by global
    /// average pooling and a three-layer regression head.
    Cnn {
        in_channels: usize,
        channels: Vec<usize>,
        hidden: [usize; 2],
        dropout: f64,
    },
    /// Three fully-connected layers over a fixed-length feature vector.
    Mlp {
        input_dim: usize,
        hidden: [usize; 2],
        dropout: f64,
    },
}

impl ArchSpec {
    /// The four-block CNN: channels 16/32/64/128, head 64/32/1, dropout 0.5.
    pub fn cnn_regressor(in_channels: usize) -> Self {
        ArchSpec::Cnn {
            in_channels,
            channels: vec![16, 32, 64, 128],
            hidden: [64, 32],
            dropout: 0.5,
        }
    }

    /// Reduced CNN for quick experiments.
    pub fn cnn_small(in_channels: usize) -> Self {
        ArchSpec::Cnn {
            in_channels,
            channels: vec![8, 16],
            hidden: [16, 8],
            dropout: 0.5,
        }
    }

    /// The BoVW regression head: input_dim -> 64 -> 32 -> 1, dropout 0.5.
    pub fn mlp_regressor(input_dim: usize) -> Self {
        ArchSpec::Mlp {
            input_dim,
            hidden: [64, 32],
            dropout: 0.5,
        }
    }
}

/// Ordered layer stack with a single scalar output.
#[derive(Debug, Clone)]
pub struct Network {
    arch: ArchSpec,
    pub layers: Vec<Layer>,
}

/// Per-layer caches from one forward pass, consumed by `backward`.
#[derive(Debug)]
pub struct Trace {
    caches: Vec<LayerCache>,
    output_len: usize,
}

impl Network {
    /// Builds a zero-initialized network; call [`Network::init_parameters`]
    /// before using it.
    pub fn from_arch(arch: &ArchSpec) -> Result<Self> {
        let mut layers = Vec::new();
        let (hidden, dropout, head_in) = match arch {
            ArchSpec::Cnn {
                in_channels,
                channels,
                hidden,
                dropout,
            } => {
                if channels.is_empty() {
                    return Err(Error::InvalidArgument("cnn needs at least one conv block".into()));
                }
                let mut prev = *in_channels;
                for &ch in channels {
                    layers.push(Layer::Conv2d(Conv2d::new(prev, ch)));
                    layers.push(Layer::Relu(Relu));
                    layers.push(Layer::MaxPool2x2(MaxPool2x2));
                    prev = ch;
                }
                layers.push(Layer::GlobalAvgPool(GlobalAvgPool));
                (*hidden, *dropout, prev)
            }
            ArchSpec::Mlp {
                input_dim,
                hidden,
                dropout,
            } => (*hidden, *dropout, *input_dim),
        };
        layers.push(Layer::Dense(Dense::new(head_in, hidden[0])));
        layers.push(Layer::Relu(Relu));
        layers.push(Layer::Dropout(Dropout::new(dropout)?));
        layers.push(Layer::Dense(Dense::new(hidden[0], hidden[1])));
        layers.push(Layer::Relu(Relu));
        layers.push(Layer::Dropout(Dropout::new(dropout)?));
        layers.push(Layer::Dense(Dense::new(hidden[1], 1)));
        Ok(Self {
            arch: arch.clone(),
            layers,
        })
    }

    pub fn cnn_regressor(in_channels: usize) -> Result<Self> {
        Self::from_arch(&ArchSpec::cnn_regressor(in_channels))
    }

    pub fn mlp_regressor(input_dim: usize) -> Result<Self> {
        Self::from_arch(&ArchSpec::mlp_regressor(input_dim))
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    /// He-uniform weights (limit sqrt(6/fan_in)), zero biases. Deterministic
    /// for a given seed.
    pub fn init_parameters(&mut self, seed: u64) {
        let mut rng = derive_rng(seed, STREAM_INIT, 0);
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d(l) => {
                    let fan_in = (l.in_channels * 9) as f64;
                    he_uniform(&mut l.weights, fan_in, &mut rng);
                }
                Layer::Dense(l) => {
                    let fan_in = l.in_features as f64;
                    he_uniform(&mut l.weights, fan_in, &mut rng);
                }
                _ => {}
            }
        }
    }

    pub fn forward(
        &self,
        input: &Tensor,
        mode: Mode,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor, Trace)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (out, cache) = layer.forward(&x, mode, rng.as_deref_mut())?;
            caches.push(cache);
            x = out;
        }
        let output_len = x.len();
        Ok((x, Trace { caches, output_len }))
    }

    /// Evaluation-mode scalar prediction; errors on inadmissible input shapes
    /// or a non-finite result.
    pub fn predict(&self, input: &Tensor) -> Result<f64> {
        let (out, _) = self.forward(input, Mode::Eval, None)?;
        if out.len() != 1 {
            return Err(Error::shape(
                "predict",
                format!("model emitted {} values, expected a scalar", out.len()),
            ));
        }
        let v = out.data()[0];
        if !v.is_finite() {
            return Err(Error::NonFinite("model prediction".into()));
        }
        Ok(v)
    }

    /// Reverse pass seeded with `upstream = d(objective)/d(output)`.
    /// Parameter gradients accumulate; the input gradient is returned.
    pub fn backward(&mut self, trace: &Trace, upstream: &Tensor) -> Result<Tensor> {
        let mut grad = upstream.clone();
        for (layer, cache) in self.layers.iter_mut().zip(&trace.caches).rev() {
            grad = layer.backward(cache, &grad)?;
        }
        Ok(grad)
    }

    /// Reverse pass for a scalar output, seeded with 1. Errors if the traced
    /// forward pass did not end in a scalar.
    pub fn backward_scalar(&mut self, trace: &Trace) -> Result<Tensor> {
        if trace.output_len != 1 {
            return Err(Error::shape(
                "backward",
                format!(
                    "backward requires a scalar output, forward produced {} values",
                    trace.output_len
                ),
            ));
        }
        self.backward(trace, &Tensor::scalar(1.0))
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        self.layers.iter().flat_map(|l| l.parameters()).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.parameters_mut())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.parameters_mut() {
            p.value.clear_grad();
        }
    }

    /// Snapshot of all parameter values, in layer order.
    pub fn params_snapshot(&self) -> Vec<Vec<f64>> {
        self.parameters()
            .iter()
            .map(|p| p.value.data().to_vec())
            .collect()
    }

    pub fn restore_params(&mut self, snapshot: &[Vec<f64>]) -> Result<()> {
        let mut params = self.parameters_mut();
        if params.len() != snapshot.len() {
            return Err(Error::shape(
                "restore_params",
                format!("{} tensors given, network has {}", snapshot.len(), params.len()),
            ));
        }
        for (p, s) in params.iter_mut().zip(snapshot) {
            if p.len() != s.len() {
                return Err(Error::shape(
                    "restore_params",
                    format!("tensor length {} vs {}", s.len(), p.len()),
                ));
            }
            p.value.data_mut().copy_from_slice(s);
        }
        Ok(())
    }
}

fn he_uniform(param: &mut Parameter, fan_in: f64, rng: &mut ChaCha8Rng) {
    let limit = (6.0 / fan_in).sqrt();
    for v in param.value.data_mut() {
        *v = (rng.random::<f64>() * 2.0 - 1.0) * limit;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cnn_parameter_count_is_pinned() {
        // conv 448 + 4640 + 18496 + 73856, head 8256 + 2080 + 33.
        let net = Network::cnn_regressor(3).unwrap();
        assert_eq!(net.param_count(), 107_809);
        let net = Network::cnn_regressor(1).unwrap();
        assert_eq!(net.param_count(), 107_521);
    }

    #[test]
    fn mlp_parameter_count_is_pinned() {
        let net = Network::mlp_regressor(128).unwrap();
        assert_eq!(net.param_count(), 10_369);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let mut a = Network::cnn_regressor(3).unwrap();
        let mut b = Network::cnn_regressor(3).unwrap();
        let mut c = Network::cnn_regressor(3).unwrap();
        a.init_parameters(9);
        b.init_parameters(9);
        c.init_parameters(10);
        assert_eq!(a.params_snapshot(), b.params_snapshot());
        assert_ne!(a.params_snapshot(), c.params_snapshot());
    }

    #[test]
    fn he_init_variance_matches_fan_in() {
        let mut net = Network::mlp_regressor(128).unwrap();
        net.init_parameters(3);
        // First dense layer has fan_in 128: variance of U(-l, l) is l^2/3 = 2/128.
        let w = net.parameters()[0].value.data();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let expected = 2.0 / 128.0;
        assert!(
            (var - expected).abs() < 0.2 * expected,
            "variance {var} vs expected {expected}"
        );
    }

    #[test]
    fn biases_start_at_zero() {
        let mut net = Network::cnn_regressor(3).unwrap();
        net.init_parameters(1);
        // Parameters alternate weights/bias per conv/dense layer.
        for (i, p) in net.parameters().iter().enumerate() {
            if i % 2 == 1 {
                assert!(p.value.data().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn zeroed_final_layer_predicts_its_bias() {
        let mut net = Network::mlp_regressor(8).unwrap();
        net.init_parameters(4);
        let n = net.parameters_mut().len();
        {
            let mut params = net.parameters_mut();
            params[n - 2].value.data_mut().fill(0.0); // final weights
            params[n - 1].value.data_mut()[0] = 2.5; // final bias
        }
        let x = Tensor::filled(vec![8], 0.3);
        assert_eq!(net.predict(&x).unwrap(), 2.5);
    }

    #[test]
    fn variable_spatial_sizes_produce_scalars() {
        let mut net = Network::cnn_regressor(3).unwrap();
        net.init_parameters(7);
        let a = net.predict(&Tensor::filled(vec![3, 20, 31], 0.5)).unwrap();
        let b = net.predict(&Tensor::filled(vec![3, 64, 48], 0.5)).unwrap();
        assert!(a.is_finite() && b.is_finite());
    }

    #[test]
    fn predict_is_deterministic_in_eval_mode() {
        let mut net = Network::cnn_regressor(3).unwrap();
        net.init_parameters(7);
        let x = Tensor::filled(vec![3, 18, 22], 0.25);
        assert_eq!(net.predict(&x).unwrap(), net.predict(&x).unwrap());
    }

    #[test]
    fn too_small_input_is_rejected() {
        let mut net = Network::cnn_regressor(3).unwrap();
        net.init_parameters(7);
        // 15 px collapses to zero rows before the last pool.
        assert!(net.predict(&Tensor::filled(vec![3, 15, 40], 0.1)).is_err());
    }

    #[test]
    fn backward_on_non_scalar_output_errors() {
        let mut net = Network::mlp_regressor(4).unwrap();
        net.init_parameters(1);
        // Chop the head so the stack ends mid-network with 32 outputs.
        net.layers.truncate(net.layers.len() - 1);
        let (_, trace) = net
            .forward(&Tensor::filled(vec![4], 1.0), Mode::Eval, None)
            .unwrap();
        assert!(net.backward_scalar(&trace).is_err());
    }

    #[test]
    fn relu_network_has_zero_gradient_on_negative_input() {
        // Identity dense into ReLU: gradient at x = -1 must be 0.
        let mut net = Network::mlp_regressor(1).unwrap();
        net.layers = vec![
            Layer::Dense(Dense::new(1, 1)),
            Layer::Relu(Relu),
        ];
        if let Layer::Dense(d) = &mut net.layers[0] {
            d.weights.value.data_mut()[0] = 1.0;
        }
        let (_, trace) = net
            .forward(&Tensor::new(vec![1], vec![-1.0]).unwrap(), Mode::Eval, None)
            .unwrap();
        let grad = net.backward_scalar(&trace).unwrap();
        assert_eq!(grad.data(), &[0.0]);
    }
}
