//! Fully-connected layer over rank-1 tensors.

use crate::error::{Error, Result};
use crate::nn::adam::Parameter;
use crate::tensor::Tensor;

/// Affine map `y = W x + b` with `W: [N_out, N_in]`, `b: [N_out]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weights: Parameter,
    pub bias: Parameter,
    pub in_features: usize,
    pub out_features: usize,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Self {
            weights: Parameter::new(Tensor::zeros(vec![out_features, in_features])),
            bias: Parameter::new(Tensor::zeros(vec![out_features])),
            in_features,
            out_features,
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let n = input.dims1("dense")?;
        if n != self.in_features {
            return Err(Error::shape(
                "dense",
                format!("input has {n} features, layer expects {}", self.in_features),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let x = input.data();
        let w = self.weights.value.data();
        let b = self.bias.value.data();
        let out: Vec<f64> = (0..self.out_features)
            .map(|o| {
                let row = &w[o * self.in_features..(o + 1) * self.in_features];
                b[o] + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>()
            })
            .collect();
        Tensor::new(vec![self.out_features], out)
    }

    pub fn backward(&mut self, input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let g_n = grad_out.dims1("dense backward")?;
        if g_n != self.out_features {
            return Err(Error::shape(
                "dense backward",
                format!("grad has {g_n} features, layer outputs {}", self.out_features),
            ));
        }
        let x = input.data();
        let g = grad_out.data();
        let n_in = self.in_features;

        {
            let gb = self.bias.value.grad_mut();
            for (gb_o, g_o) in gb.iter_mut().zip(g) {
                *gb_o += g_o;
            }
        }
        let w = self.weights.value.data().to_vec();
        let gw = self.weights.value.grad_mut();
        let mut grad_in = vec![0.0; n_in];
        for o in 0..self.out_features {
            let go = g[o];
            let row = &w[o * n_in..(o + 1) * n_in];
            let grow = &mut gw[o * n_in..(o + 1) * n_in];
            for i in 0..n_in {
                grow[i] += go * x[i];
                grad_in[i] += go * row[i];
            }
        }
        Tensor::new(vec![n_in], grad_in)
    }
}
