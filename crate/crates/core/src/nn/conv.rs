//! 3x3 same-padding convolution over `[C, H, W]` tensors.

use crate::error::{Error, Result};
use crate::nn::adam::Parameter;
use crate::tensor::Tensor;

/// 3x3 convolution, stride 1, zero padding 1, so spatial size is preserved.
/// Weights are `[C_out, C_in, 3, 3]`, bias `[C_out]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weights: Parameter,
    pub bias: Parameter,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize) -> Self {
        Self {
            weights: Parameter::new(Tensor::zeros(vec![out_channels, in_channels, 3, 3])),
            bias: Parameter::new(Tensor::zeros(vec![out_channels])),
            in_channels,
            out_channels,
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<(usize, usize, usize)> {
        let (c, h, w) = input.dims3("conv2d")?;
        if c != self.in_channels {
            return Err(Error::shape(
                "conv2d",
                format!("input has {c} channels, layer expects {}", self.in_channels),
            ));
        }
        Ok((c, h, w))
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (c_in, h, w) = self.check_input(input)?;
        let mut out = vec![0.0; self.out_channels * h * w];
        let wts = self.weights.value.data();
        let bias = self.bias.value.data();
        let x = input.data();

        for co in 0..self.out_channels {
            let out_ch = &mut out[co * h * w..(co + 1) * h * w];
            out_ch.fill(bias[co]);
            for ci in 0..c_in {
                let in_ch = &x[ci * h * w..(ci + 1) * h * w];
                let w_base = (co * c_in + ci) * 9;
                for ky in 0..3usize {
                    for kx in 0..3usize {
                        let wv = wts[w_base + ky * 3 + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        // Output rows y where the tap y+ky-1 is in bounds.
                        let y_lo = 1usize.saturating_sub(ky);
                        let y_hi = (h + 1 - ky).min(h);
                        let x_lo = 1usize.saturating_sub(kx);
                        let x_hi = (w + 1 - kx).min(w);
                        for y in y_lo..y_hi {
                            let iy = y + ky - 1;
                            let orow = &mut out_ch[y * w + x_lo..y * w + x_hi];
                            let irow = &in_ch[iy * w + x_lo + kx - 1..iy * w + x_hi + kx - 1];
                            for (o, i) in orow.iter_mut().zip(irow) {
                                *o += wv * i;
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(vec![self.out_channels, h, w], out)
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let (c_in, h, w) = self.check_input(input)?;
        let (c_out, gh, gw) = grad_out.dims3("conv2d backward")?;
        if c_out != self.out_channels || gh != h || gw != w {
            return Err(Error::shape(
                "conv2d backward",
                format!(
                    "grad shape {:?} does not match output [{}, {h}, {w}]",
                    grad_out.shape(),
                    self.out_channels
                ),
            ));
        }

        let mut grad_in = vec![0.0; c_in * h * w];
        let x = input.data();
        let g = grad_out.data();
        let wts = self.weights.value.data().to_vec();

        {
            let gb = self.bias.value.grad_mut();
            for co in 0..c_out {
                gb[co] += g[co * h * w..(co + 1) * h * w].iter().sum::<f64>();
            }
        }

        let gw_slot = self.weights.value.grad_mut();
        for co in 0..c_out {
            let g_ch = &g[co * h * w..(co + 1) * h * w];
            for ci in 0..c_in {
                let in_ch = &x[ci * h * w..(ci + 1) * h * w];
                let gin_ch = &mut grad_in[ci * h * w..(ci + 1) * h * w];
                let w_base = (co * c_in + ci) * 9;
                for ky in 0..3usize {
                    for kx in 0..3usize {
                        let y_lo = 1usize.saturating_sub(ky);
                        let y_hi = (h + 1 - ky).min(h);
                        let x_lo = 1usize.saturating_sub(kx);
                        let x_hi = (w + 1 - kx).min(w);
                        let wv = wts[w_base + ky * 3 + kx];
                        let mut dw = 0.0;
                        for y in y_lo..y_hi {
                            let iy = y + ky - 1;
                            let grow = &g_ch[y * w + x_lo..y * w + x_hi];
                            let ioff = iy * w + x_lo + kx - 1;
                            let irow = &in_ch[ioff..ioff + (x_hi - x_lo)];
                            let girow = &mut gin_ch[ioff..ioff + (x_hi - x_lo)];
                            for k in 0..grow.len() {
                                dw += grow[k] * irow[k];
                                girow[k] += wv * grow[k];
                            }
                        }
                        gw_slot[w_base + ky * 3 + kx] += dw;
                    }
                }
            }
        }
        Tensor::new(vec![c_in, h, w], grad_in)
    }
}
