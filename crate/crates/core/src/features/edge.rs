//! Sobel edge maps for the shape-based pipeline.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Luma conversion with the usual Rec. 601 weights.
pub fn rgb_to_gray(image: &Tensor) -> Result<Tensor> {
    let (c, h, w) = image.dims3("rgb_to_gray")?;
    match c {
        1 => Ok(image.clone()),
        3 => {
            let x = image.data();
            let plane = h * w;
            let gray: Vec<f64> = (0..plane)
                .map(|i| 0.299 * x[i] + 0.587 * x[plane + i] + 0.114 * x[2 * plane + i])
                .collect();
            Tensor::new(vec![1, h, w], gray)
        }
        _ => Err(Error::shape(
            "rgb_to_gray",
            format!("expected 1 or 3 channels, got {c}"),
        )),
    }
}

/// Sobel gradient magnitude, normalized by the image's max magnitude so the
/// result lies in [0, 1] (all-zero for constant images). Borders replicate.
pub fn edge_detect(image: &Tensor) -> Result<Tensor> {
    let gray = rgb_to_gray(image)?;
    let (_, h, w) = gray.dims3("edge_detect")?;
    if h < 3 || w < 3 {
        return Err(Error::shape(
            "edge_detect",
            format!("image {h}x{w} is smaller than the 3x3 Sobel window"),
        ));
    }
    let g = gray.data();
    let at = |y: isize, x: isize| -> f64 {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        g[y * w + x]
    };
    let mut mag = vec![0.0; h * w];
    let mut max_mag = 0.0f64;
    for y in 0..h as isize {
        for x in 0..w as isize {
            // Grouped as row/column differences so constant regions cancel
            // exactly to zero.
            let gx = (at(y - 1, x + 1) - at(y - 1, x - 1))
                + 2.0 * (at(y, x + 1) - at(y, x - 1))
                + (at(y + 1, x + 1) - at(y + 1, x - 1));
            let gy = (at(y + 1, x - 1) - at(y - 1, x - 1))
                + 2.0 * (at(y + 1, x) - at(y - 1, x))
                + (at(y + 1, x + 1) - at(y - 1, x + 1));
            let m = (gx * gx + gy * gy).sqrt();
            mag[(y as usize) * w + x as usize] = m;
            max_mag = max_mag.max(m);
        }
    }
    if max_mag > 0.0 {
        for v in &mut mag {
            *v /= max_mag;
        }
    }
    Tensor::new(vec![1, h, w], mag)
}
