//! Synthetic title-image generator for desk-scale experiments.
//!
//! Images mimic the dataset's year-dependent style drift: older years get
//! thicker strokes, warmer colors and stronger slant; newer years get thin,
//! cool, upright strokes. Outlier samples keep their true-year label but are
//! rendered in the style of a uniformly random year, which is exactly the
//! label/style mismatch a robust loss should shrug off.

use crate::data::images::tensor_to_rgb_image;
use crate::error::{Error, Result};
use crate::rng::{derive_rng, STREAM_SYNTH};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub height_range: (usize, usize),
    pub width_range: (usize, usize),
    pub strokes: (usize, usize),
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            height_range: (32, 44),
            width_range: (44, 60),
            strokes: (2, 3),
        }
    }
}

impl SynthParams {
    /// Smaller canvases for quick CNN experiments.
    pub fn small() -> Self {
        Self {
            height_range: (20, 26),
            width_range: (28, 36),
            strokes: (2, 3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSummary {
    pub images_written: usize,
    pub outliers: usize,
}

/// True when a generated file was rendered with an off-year style.
pub fn is_outlier_path(path: &str) -> bool {
    path.contains("_outlier")
}

pub fn generate_synthetic(
    root: &Path,
    years: &[i32],
    n_per_year: usize,
    outlier_rate: f64,
    seed: u64,
) -> Result<SynthSummary> {
    generate_synthetic_with(root, years, n_per_year, outlier_rate, seed, &SynthParams::default())
}

pub fn generate_synthetic_with(
    root: &Path,
    years: &[i32],
    n_per_year: usize,
    outlier_rate: f64,
    seed: u64,
    params: &SynthParams,
) -> Result<SynthSummary> {
    if !(0.0..1.0).contains(&outlier_rate) {
        return Err(Error::InvalidArgument(format!(
            "outlier_rate must be in [0, 1), got {outlier_rate}"
        )));
    }
    if years.is_empty() || n_per_year == 0 {
        return Err(Error::InvalidArgument(
            "need at least one year and one image per year".into(),
        ));
    }
    let y_min = *years.iter().min().unwrap();
    let y_max = *years.iter().max().unwrap();
    let span = (y_max - y_min).max(1) as f64;

    let mut summary = SynthSummary {
        images_written: 0,
        outliers: 0,
    };
    for &year in years {
        let dir = root.join(year.to_string());
        std::fs::create_dir_all(&dir)?;
        for i in 0..n_per_year {
            let mut rng = derive_rng(seed, STREAM_SYNTH, ((year as u64) << 24) | i as u64);
            let is_outlier = rng.random::<f64>() < outlier_rate;
            let style_year = if is_outlier {
                years[(rng.random::<f64>() * years.len() as f64) as usize % years.len()]
            } else {
                year
            };
            let style = (style_year - y_min) as f64 / span;
            let img = render_title_image(&mut rng, style, params)?;
            let name = if is_outlier {
                format!("s{i:03}_outlier.png")
            } else {
                format!("s{i:03}.png")
            };
            tensor_to_rgb_image(&img)?.save(dir.join(name))?;
            summary.images_written += 1;
            if is_outlier {
                summary.outliers += 1;
            }
        }
    }
    Ok(summary)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Renders one title-like image. `style` in [0, 1]: 0 = oldest (thick, warm,
/// slanted), 1 = newest (thin, cool, upright).
pub fn render_title_image(rng: &mut ChaCha8Rng, style: f64, params: &SynthParams) -> Result<Tensor> {
    let rand_in = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| -> usize {
        lo + (rng.random::<f64>() * (hi - lo + 1) as f64) as usize % (hi - lo + 1)
    };
    let h = rand_in(rng, params.height_range.0, params.height_range.1);
    let w = rand_in(rng, params.width_range.0, params.width_range.1);
    let n_strokes = rand_in(rng, params.strokes.0, params.strokes.1);

    let jitter = |rng: &mut ChaCha8Rng, amp: f64| (rng.random::<f64>() * 2.0 - 1.0) * amp;

    // Dark background with a mild tint.
    let bg = 0.06 + rng.random::<f64>() * 0.08;
    let mut data = vec![0.0f64; 3 * h * w];
    for c in 0..3 {
        let tint = jitter(rng, 0.02);
        data[c * h * w..(c + 1) * h * w].fill((bg + tint).clamp(0.0, 1.0));
    }

    // Stroke style: thickness, slant and warmth drift with the year.
    let thickness = lerp(0.18, 0.055, style) * h as f64 + jitter(rng, 0.4);
    let slope = (lerp(12.0, 0.0, style) + jitter(rng, 2.0)).to_radians().tan();
    let r = (lerp(0.82, 0.22, style) + jitter(rng, 0.04)).clamp(0.0, 1.0);
    let g = (lerp(0.48, 0.42, style) + jitter(rng, 0.04)).clamp(0.0, 1.0);
    let b = (lerp(0.16, 0.84, style) + jitter(rng, 0.04)).clamp(0.0, 1.0);

    let paint = |data: &mut Vec<f64>, y: usize, x: usize| {
        let i = y * w + x;
        data[i] = r;
        data[h * w + i] = g;
        data[2 * h * w + i] = b;
    };

    let margin_x = 2 + (0.06 * w as f64) as usize;
    for s in 0..n_strokes {
        let band = h as f64 / (n_strokes as f64 + 1.0);
        let y_center = band * (s as f64 + 1.0) + jitter(rng, band * 0.15);
        let x0 = margin_x + rand_in(rng, 0, w / 10);
        let x1 = w - margin_x - rand_in(rng, 0, w / 10);
        let mid_x = (x0 + x1) as f64 / 2.0;
        for x in x0..x1 {
            let yc = y_center + slope * (x as f64 - mid_x);
            let half = (thickness / 2.0).max(0.5);
            let lo = ((yc - half).floor().max(0.0)) as usize;
            let hi = ((yc + half).ceil().min(h as f64 - 1.0)) as usize;
            for y in lo..=hi {
                paint(&mut data, y, x);
            }
        }
    }

    // Square ornaments stand in for letterform detail; older styles carry
    // more and bigger decoration. These give the local-feature pipeline
    // blob-scale structure to key on.
    let n_ornaments = (lerp(7.0, 3.0, style) + jitter(rng, 1.0)).round().max(1.0) as usize;
    let orn_size = (lerp(4.0, 2.0, style) + jitter(rng, 0.5)).round().max(2.0) as usize;
    for _ in 0..n_ornaments {
        let oy = rand_in(rng, 1, h.saturating_sub(orn_size + 2).max(2));
        let ox = rand_in(rng, 1, w.saturating_sub(orn_size + 2).max(2));
        for y in oy..oy + orn_size {
            for x in ox..ox + orn_size {
                paint(&mut data, y, x);
            }
        }
    }

    // Pixel noise on all channels.
    for v in &mut data {
        *v = (*v + jitter(rng, 0.02)).clamp(0.0, 1.0);
    }
    Tensor::new(vec![3, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::images::load_image_tensor;
    use tempfile::tempdir;

    fn mean_warmth(t: &Tensor) -> f64 {
        let (_, h, w) = t.dims3("warmth").unwrap();
        let plane = h * w;
        let d = t.data();
        let r: f64 = d[0..plane].iter().sum::<f64>() / plane as f64;
        let b: f64 = d[2 * plane..3 * plane].iter().sum::<f64>() / plane as f64;
        r - b
    }

    #[test]
    fn fixed_seed_reproduces_identical_files() {
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        generate_synthetic(d1.path(), &[1950, 1990], 3, 0.2, 11).unwrap();
        generate_synthetic(d2.path(), &[1950, 1990], 3, 0.2, 11).unwrap();
        for year in [1950, 1990] {
            let dir1 = d1.path().join(year.to_string());
            for entry in std::fs::read_dir(&dir1).unwrap() {
                let name = entry.unwrap().file_name();
                let a = std::fs::read(dir1.join(&name)).unwrap();
                let b = std::fs::read(d2.path().join(year.to_string()).join(&name)).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn warmth_separates_distant_years_without_outliers() {
        let dir = tempdir().unwrap();
        generate_synthetic(dir.path(), &[1940, 2000], 12, 0.0, 5).unwrap();
        let warmth_of = |year: i32| -> Vec<f64> {
            let ydir = dir.path().join(year.to_string());
            std::fs::read_dir(ydir)
                .unwrap()
                .map(|e| {
                    let t = load_image_tensor(&e.unwrap().path(), 16).unwrap();
                    mean_warmth(&t)
                })
                .collect()
        };
        let old = warmth_of(1940);
        let new = warmth_of(2000);
        let old_min = old.iter().cloned().fold(f64::MAX, f64::min);
        let new_max = new.iter().cloned().fold(f64::MIN, f64::max);
        // Disjoint ranges: a threshold between them classifies perfectly.
        assert!(
            old_min > new_max,
            "warmth ranges overlap: old min {old_min}, new max {new_max}"
        );
    }

    #[test]
    fn outlier_count_is_binomial() {
        let dir = tempdir().unwrap();
        let years: Vec<i32> = (1940..1950).collect();
        let summary = generate_synthetic(dir.path(), &years, 100, 0.3, 7).unwrap();
        assert_eq!(summary.images_written, 1000);
        // 99% interval around np = 300 with sd ~ 14.5.
        assert!(
            (263..=337).contains(&summary.outliers),
            "outliers {} outside binomial 99% interval",
            summary.outliers
        );
        // The filenames carry the outlier marker.
        let marked: usize = years
            .iter()
            .map(|y| {
                std::fs::read_dir(dir.path().join(y.to_string()))
                    .unwrap()
                    .filter(|e| {
                        is_outlier_path(&e.as_ref().unwrap().file_name().to_string_lossy())
                    })
                    .count()
            })
            .sum();
        assert_eq!(marked, summary.outliers);
    }

    #[test]
    fn invalid_outlier_rate_is_rejected() {
        let dir = tempdir().unwrap();
        assert!(generate_synthetic(dir.path(), &[1980], 1, 1.0, 1).is_err());
        assert!(generate_synthetic(dir.path(), &[1980], 1, -0.1, 1).is_err());
    }
}
