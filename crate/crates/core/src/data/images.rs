//! Image decoding and conversion to `[C, H, W]` tensors.

use crate::error::Result;
use crate::tensor::Tensor;
use image::imageops::FilterType;
use image::{DynamicImage, RgbImage};
use std::path::Path;

/// Minimum side length the CNN needs for its four pooling stages.
pub const MIN_SIDE: u32 = 16;

/// Loads an image as an RGB `[3, H, W]` tensor in [0, 1]. Grayscale files
/// are promoted to three channels. Images with a side below `min_side` are
/// upscaled preserving aspect ratio.
pub fn load_image_tensor(path: &Path, min_side: u32) -> Result<Tensor> {
    let img = image::open(path)?;
    Ok(rgb_image_to_tensor(&ensure_min_side(img, min_side).to_rgb8()))
}

fn ensure_min_side(img: DynamicImage, min_side: u32) -> DynamicImage {
    let (w, h) = (img.width(), img.height());
    let short = w.min(h);
    if short >= min_side || short == 0 {
        return img;
    }
    let scale = min_side as f64 / short as f64;
    let nw = (w as f64 * scale).ceil() as u32;
    let nh = (h as f64 * scale).ceil() as u32;
    img.resize_exact(nw, nh, FilterType::Triangle)
}

pub fn rgb_image_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0f64; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        let i = y as usize * w + x as usize;
        data[i] = px.0[0] as f64 / 255.0;
        data[h * w + i] = px.0[1] as f64 / 255.0;
        data[2 * h * w + i] = px.0[2] as f64 / 255.0;
    }
    Tensor::new(vec![3, h, w], data).expect("consistent dims")
}

pub fn tensor_to_rgb_image(t: &Tensor) -> Result<RgbImage> {
    let (c, h, w) = t.dims3("tensor_to_rgb_image")?;
    let data = t.data();
    let mut img = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            let px = if c == 1 {
                [to_u8(data[i]); 3]
            } else {
                [
                    to_u8(data[i]),
                    to_u8(data[h * w + i]),
                    to_u8(data[2 * h * w + i]),
                ]
            };
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn round_trip_through_png() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.png");
        let mut img = RgbImage::new(20, 18);
        for (x, y, px) in img.enumerate_pixels_mut() {
            px.0 = [(x * 12) as u8, (y * 13) as u8, 200];
        }
        img.save(&path).unwrap();
        let t = load_image_tensor(&path, MIN_SIDE).unwrap();
        assert_eq!(t.shape(), &[3, 18, 20]);
        let back = tensor_to_rgb_image(&t).unwrap();
        assert_eq!(back.get_pixel(3, 2), img.get_pixel(3, 2));
    }

    #[test]
    fn small_images_are_upscaled_preserving_aspect() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s.png");
        RgbImage::new(24, 8).save(&path).unwrap();
        let t = load_image_tensor(&path, 16).unwrap();
        // Short side 8 -> 16, long side 24 -> 48.
        assert_eq!(t.shape(), &[3, 16, 48]);
    }
}
