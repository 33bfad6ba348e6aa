//! Max pooling and global average pooling.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 2x2 max pooling with stride 2; an odd trailing row/column is dropped.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2x2;

/// Flat input indices of each output cell's max, for gradient routing.
#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    pub in_shape: (usize, usize, usize),
    pub argmax: Vec<usize>,
}

impl MaxPool2x2 {
    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, MaxPoolCache)> {
        let (c, h, w) = input.dims3("maxpool2x2")?;
        if h < 2 || w < 2 {
            return Err(Error::shape(
                "maxpool2x2",
                format!("spatial size {h}x{w} is smaller than the 2x2 window"),
            ));
        }
        let (oh, ow) = (h / 2, w / 2);
        let x = input.data();
        let mut out = vec![0.0; c * oh * ow];
        let mut argmax = vec![0usize; c * oh * ow];
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = (ch * h + oy * 2) * w + ox * 2;
                    let mut best = x[best_idx];
                    // Row-major scan; strict > keeps the first max on ties.
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let idx = (ch * h + oy * 2 + dy) * w + ox * 2 + dx;
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = (ch * oh + oy) * ow + ox;
                    out[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
        Ok((
            Tensor::new(vec![c, oh, ow], out)?,
            MaxPoolCache {
                in_shape: (c, h, w),
                argmax,
            },
        ))
    }

    pub fn backward(&self, cache: &MaxPoolCache, grad_out: &Tensor) -> Result<Tensor> {
        let (c, h, w) = cache.in_shape;
        if grad_out.len() != cache.argmax.len() {
            return Err(Error::shape(
                "maxpool2x2 backward",
                format!(
                    "grad has {} elements, cache expects {}",
                    grad_out.len(),
                    cache.argmax.len()
                ),
            ));
        }
        let mut grad_in = vec![0.0; c * h * w];
        for (g, &idx) in grad_out.data().iter().zip(&cache.argmax) {
            grad_in[idx] += g;
        }
        Tensor::new(vec![c, h, w], grad_in)
    }
}

/// Per-channel spatial mean; output length depends only on the channel count.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool;

impl GlobalAvgPool {
    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, (usize, usize, usize))> {
        let (c, h, w) = input.dims3("global_average_pool")?;
        let x = input.data();
        let area = (h * w) as f64;
        let out: Vec<f64> = (0..c)
            .map(|ch| x[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / area)
            .collect();
        Ok((Tensor::new(vec![c], out)?, (c, h, w)))
    }

    pub fn backward(&self, in_shape: (usize, usize, usize), grad_out: &Tensor) -> Result<Tensor> {
        let (c, h, w) = in_shape;
        let g = grad_out.dims1("global_average_pool backward")?;
        if g != c {
            return Err(Error::shape(
                "global_average_pool backward",
                format!("grad has {g} channels, input had {c}"),
            ));
        }
        let area = (h * w) as f64;
        let mut grad_in = vec![0.0; c * h * w];
        for ch in 0..c {
            let gv = grad_out.data()[ch] / area;
            grad_in[ch * h * w..(ch + 1) * h * w].fill(gv);
        }
        Tensor::new(vec![c, h, w], grad_in)
    }
}
