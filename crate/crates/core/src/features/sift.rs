//! Scale-space keypoint detection and 128-d gradient descriptors.
//!
//! Difference-of-Gaussians pyramid (4 octaves, 3 scales per octave),
//! orientation assignment from a 36-bin gradient histogram, and a 4x4x8
//! trilinearly-binned descriptor. Descriptors are L2-normalized, clamped at
//! 0.2 and renormalized. When more than `max_keypoints` survive, the
//! strongest DoG responses are kept.

use crate::error::Result;
use crate::features::edge::rgb_to_gray;
use crate::tensor::Tensor;
use std::f64::consts::PI;

pub const DESCRIPTOR_DIM: usize = 128;

#[derive(Debug, Clone)]
pub struct Descriptor {
    /// Position in original-image pixel coordinates.
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    /// Dominant gradient orientation in radians.
    pub orientation: f64,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SiftParams {
    pub max_keypoints: usize,
    pub octaves: usize,
    pub scales_per_octave: usize,
    pub contrast_threshold: f64,
    /// Principal-curvature ratio for edge-response rejection.
    pub edge_ratio: f64,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            max_keypoints: 500,
            octaves: 4,
            scales_per_octave: 3,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
        }
    }
}

const SIGMA0: f64 = 1.6;

/// Extracts at most `max_keypoints` descriptors from a grayscale or RGB image.
/// Images too small to host a descriptor window yield an empty list.
pub fn extract_descriptors(image: &Tensor, max_keypoints: usize) -> Result<Vec<Descriptor>> {
    extract_descriptors_with(
        image,
        &SiftParams {
            max_keypoints,
            ..SiftParams::default()
        },
    )
}

pub fn extract_descriptors_with(image: &Tensor, params: &SiftParams) -> Result<Vec<Descriptor>> {
    let gray = rgb_to_gray(image)?;
    let (_, h, w) = gray.dims3("extract_descriptors")?;
    let base = Gray {
        w,
        h,
        data: gray.data().to_vec(),
    };

    let mut candidates: Vec<Keypoint> = Vec::new();
    let n_scales = params.scales_per_octave;
    let k = 2f64.powf(1.0 / n_scales as f64);

    // The pyramid starts from a 2x upsampled image so fine-scale structure
    // lands inside the searched DoG layers. With an assumed capture blur of
    // 0.5, the upsampled image carries sigma 1.0.
    let upsampled = base.upsample2();
    let mut octave_base = upsampled.blur((SIGMA0 * SIGMA0 - 1.0).max(1e-6).sqrt());
    for octave in 0..params.octaves {
        if octave_base.w < 8 || octave_base.h < 8 {
            break;
        }
        // s+3 gaussian images, s+2 DoG layers.
        let mut gaussians = vec![octave_base.clone()];
        for j in 1..n_scales + 3 {
            let sigma_prev = SIGMA0 * k.powi(j as i32 - 1);
            let sigma_next = sigma_prev * k;
            let inc = (sigma_next * sigma_next - sigma_prev * sigma_prev).sqrt();
            gaussians.push(gaussians[j - 1].blur(inc));
        }
        let dogs: Vec<Gray> = (0..n_scales + 2)
            .map(|j| gaussians[j + 1].sub(&gaussians[j]))
            .collect();

        for layer in 1..=n_scales {
            find_extrema(&dogs, layer, params, |y, x, response| {
                let sigma_layer = SIGMA0 * k.powi(layer as i32);
                if let Some(kp) = make_keypoint(
                    &gaussians[layer],
                    octave,
                    x,
                    y,
                    sigma_layer,
                    response,
                ) {
                    candidates.push(kp);
                }
            });
        }
        octave_base = gaussians[n_scales].downsample2();
    }

    // Strongest responses first; ties broken by position for determinism.
    candidates.sort_by(|a, b| {
        b.response
            .partial_cmp(&a.response)
            .unwrap()
            .then(a.octave.cmp(&b.octave))
            .then(a.iy.cmp(&b.iy))
            .then(a.ix.cmp(&b.ix))
    });
    candidates.truncate(params.max_keypoints);
    Ok(candidates.into_iter().map(|kp| kp.descriptor).collect())
}

struct Keypoint {
    response: f64,
    octave: usize,
    iy: usize,
    ix: usize,
    descriptor: Descriptor,
}

fn find_extrema(dogs: &[Gray], layer: usize, params: &SiftParams, mut emit: impl FnMut(usize, usize, f64)) {
    let d = &dogs[layer];
    let (w, h) = (d.w, d.h);
    let edge_limit = (params.edge_ratio + 1.0).powi(2) / params.edge_ratio;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let v = d.get(y, x);
            if v.abs() < params.contrast_threshold {
                continue;
            }
            let mut is_max = true;
            let mut is_min = true;
            'scan: for dl in [layer - 1, layer, layer + 1] {
                let n = &dogs[dl];
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        if dl == layer && dy == 0 && dx == 0 {
                            continue;
                        }
                        let nv = n.get((y as isize + dy) as usize, (x as isize + dx) as usize);
                        if nv >= v {
                            is_max = false;
                        }
                        if nv <= v {
                            is_min = false;
                        }
                        if !is_max && !is_min {
                            break 'scan;
                        }
                    }
                }
            }
            if !(is_max || is_min) {
                continue;
            }
            // Reject edge-like responses via the 2x2 Hessian.
            let dxx = d.get(y, x - 1) - 2.0 * v + d.get(y, x + 1);
            let dyy = d.get(y - 1, x) - 2.0 * v + d.get(y + 1, x);
            let dxy = 0.25
                * (d.get(y + 1, x + 1) - d.get(y + 1, x - 1) - d.get(y - 1, x + 1)
                    + d.get(y - 1, x - 1));
            let tr = dxx + dyy;
            let det = dxx * dyy - dxy * dxy;
            if det <= 0.0 || tr * tr / det >= edge_limit {
                continue;
            }
            emit(y, x, v.abs());
        }
    }
}

fn make_keypoint(
    gauss: &Gray,
    octave: usize,
    x: usize,
    y: usize,
    sigma_layer: f64,
    response: f64,
) -> Option<Keypoint> {
    let orientation = dominant_orientation(gauss, x, y, sigma_layer)?;
    let vector = describe(gauss, x as f64, y as f64, sigma_layer, orientation)?;
    // Octave 0 is the 2x upsampled image.
    let scale_factor = (1usize << octave) as f64 * 0.5;
    Some(Keypoint {
        response,
        octave,
        iy: y,
        ix: x,
        descriptor: Descriptor {
            x: x as f64 * scale_factor,
            y: y as f64 * scale_factor,
            scale: sigma_layer * scale_factor,
            orientation,
            vector,
        },
    })
}

const ORI_BINS: usize = 36;

fn dominant_orientation(img: &Gray, x: usize, y: usize, sigma_layer: f64) -> Option<f64> {
    let win_sigma = 1.5 * sigma_layer;
    let radius = (3.0 * win_sigma).round() as isize;
    let mut hist = [0.0f64; ORI_BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let py = y as isize + dy;
            let px = x as isize + dx;
            if py < 1 || px < 1 || py >= img.h as isize - 1 || px >= img.w as isize - 1 {
                continue;
            }
            let (py, px) = (py as usize, px as usize);
            let gx = img.get(py, px + 1) - img.get(py, px - 1);
            let gy = img.get(py + 1, px) - img.get(py - 1, px);
            let mag = (gx * gx + gy * gy).sqrt();
            let weight = (-((dx * dx + dy * dy) as f64) / (2.0 * win_sigma * win_sigma)).exp();
            let angle = gy.atan2(gx); // [-pi, pi]
            let bin = (((angle + PI) / (2.0 * PI)) * ORI_BINS as f64).floor() as usize % ORI_BINS;
            hist[bin] += mag * weight;
        }
    }
    // Two passes of circular box smoothing.
    for _ in 0..2 {
        let prev = hist;
        for i in 0..ORI_BINS {
            hist[i] = (prev[(i + ORI_BINS - 1) % ORI_BINS] + prev[i] + prev[(i + 1) % ORI_BINS]) / 3.0;
        }
    }
    let (peak, &peak_v) = hist
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    if peak_v <= 0.0 {
        return None;
    }
    // Parabolic interpolation around the peak bin.
    let l = hist[(peak + ORI_BINS - 1) % ORI_BINS];
    let r = hist[(peak + 1) % ORI_BINS];
    let denom = l - 2.0 * peak_v + r;
    let offset = if denom.abs() < 1e-12 {
        0.0
    } else {
        (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
    };
    let bin = peak as f64 + 0.5 + offset;
    Some(bin / ORI_BINS as f64 * 2.0 * PI - PI)
}

const GRID: usize = 4;
const DESC_ORI_BINS: usize = 8;
const SAMPLES: isize = 16;

/// 4x4 spatial cells x 8 orientation bins, trilinear binning, Gaussian
/// windowed. Returns None when the rotated window would leave the image.
fn describe(img: &Gray, x: f64, y: f64, sigma_layer: f64, theta: f64) -> Option<Vec<f64>> {
    let spacing = sigma_layer / SIGMA0;
    let reach = 7.5 * std::f64::consts::SQRT_2 * spacing + 1.5;
    if x - reach < 1.0
        || y - reach < 1.0
        || x + reach > (img.w - 2) as f64
        || y + reach > (img.h - 2) as f64
    {
        return None;
    }
    let (sin_t, cos_t) = theta.sin_cos();
    let mut desc = vec![0.0f64; GRID * GRID * DESC_ORI_BINS];
    for i in 0..SAMPLES {
        for j in 0..SAMPLES {
            let u = (i as f64) - 7.5; // along the keypoint orientation
            let v = (j as f64) - 7.5;
            let ox = (cos_t * u - sin_t * v) * spacing;
            let oy = (sin_t * u + cos_t * v) * spacing;
            let px = x + ox;
            let py = y + oy;
            let gx = img.bilinear(py, px + 1.0) - img.bilinear(py, px - 1.0);
            let gy = img.bilinear(py + 1.0, px) - img.bilinear(py - 1.0, px);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let weight = (-(u * u + v * v) / (2.0 * 8.0 * 8.0)).exp();
            let angle = normalize_angle(gy.atan2(gx) - theta);
            let ori = angle / (2.0 * PI) * DESC_ORI_BINS as f64; // [0, 8)
            let cx = (u + 8.0) / 4.0 - 0.5; // [-0.5, 3.5]
            let cy = (v + 8.0) / 4.0 - 0.5;
            trilinear_add(&mut desc, cx, cy, ori, mag * weight);
        }
    }
    if !condition(&mut desc) {
        return None;
    }
    Some(desc)
}

/// L2-normalize, clamp entries at 0.2, renormalize. False for zero vectors.
fn condition(desc: &mut [f64]) -> bool {
    let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    for v in desc.iter_mut() {
        *v = (*v / norm).min(0.2);
    }
    let norm = desc.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in desc.iter_mut() {
        *v /= norm;
    }
    true
}

fn normalize_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a < 0.0 {
        a += 2.0 * PI;
    }
    a
}

fn trilinear_add(desc: &mut [f64], cx: f64, cy: f64, ori: f64, value: f64) {
    let x0 = cx.floor();
    let y0 = cy.floor();
    let o0 = ori.floor();
    for (xi, wx) in [(x0, 1.0 - (cx - x0)), (x0 + 1.0, cx - x0)] {
        if !(0.0..GRID as f64).contains(&xi) {
            continue;
        }
        for (yi, wy) in [(y0, 1.0 - (cy - y0)), (y0 + 1.0, cy - y0)] {
            if !(0.0..GRID as f64).contains(&yi) {
                continue;
            }
            for (oi, wo) in [(o0, 1.0 - (ori - o0)), (o0 + 1.0, ori - o0)] {
                let ob = (oi as usize) % DESC_ORI_BINS;
                let idx = ((yi as usize) * GRID + xi as usize) * DESC_ORI_BINS + ob;
                desc[idx] += value * wx * wy * wo;
            }
        }
    }
}

// --- internal float image ---------------------------------------------------

#[derive(Clone)]
struct Gray {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Gray {
    fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.w + x]
    }

    fn get_clamped(&self, y: isize, x: isize) -> f64 {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.data[y * self.w + x]
    }

    fn bilinear(&self, y: f64, x: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as isize, y0 as isize);
        let v00 = self.get_clamped(y0, x0);
        let v01 = self.get_clamped(y0, x0 + 1);
        let v10 = self.get_clamped(y0 + 1, x0);
        let v11 = self.get_clamped(y0 + 1, x0 + 1);
        v00 * (1.0 - fx) * (1.0 - fy) + v01 * fx * (1.0 - fy) + v10 * (1.0 - fx) * fy
            + v11 * fx * fy
    }

    /// Separable Gaussian blur with replicated borders.
    fn blur(&self, sigma: f64) -> Gray {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil().max(1.0) as isize;
        let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
        for d in -radius..=radius {
            kernel.push((-((d * d) as f64) / (2.0 * sigma * sigma)).exp());
        }
        let sum: f64 = kernel.iter().sum();
        for v in &mut kernel {
            *v /= sum;
        }

        let mut tmp = vec![0.0; self.data.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                let mut acc = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    acc += kv * self.get_clamped(y as isize, x as isize + ki as isize - radius);
                }
                tmp[y * self.w + x] = acc;
            }
        }
        let tmp_img = Gray {
            w: self.w,
            h: self.h,
            data: tmp,
        };
        let mut out = vec![0.0; self.data.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                let mut acc = 0.0;
                for (ki, kv) in kernel.iter().enumerate() {
                    acc += kv * tmp_img.get_clamped(y as isize + ki as isize - radius, x as isize);
                }
                out[y * self.w + x] = acc;
            }
        }
        Gray {
            w: self.w,
            h: self.h,
            data: out,
        }
    }

    fn sub(&self, other: &Gray) -> Gray {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Gray {
            w: self.w,
            h: self.h,
            data,
        }
    }

    fn downsample2(&self) -> Gray {
        let (w, h) = (self.w / 2, self.h / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.get(y * 2, x * 2));
            }
        }
        Gray { w, h, data }
    }

    fn upsample2(&self) -> Gray {
        let (w, h) = (self.w * 2, self.h * 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.bilinear(y as f64 * 0.5, x as f64 * 0.5));
            }
        }
        Gray { w, h, data }
    }
}
