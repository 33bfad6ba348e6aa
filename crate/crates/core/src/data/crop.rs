//! Heuristic title-region cropper.
//!
//! Otsu binarization (foreground = minority class), 8-connected components,
//! horizontal merging of components into line boxes, and a crop of the
//! largest-area box padded by 4 px. Falls back to the full image when no
//! component is found.

use crate::error::Result;
use crate::features::edge::rgb_to_gray;
use crate::tensor::Tensor;

const PAD: usize = 4;
const MIN_COMPONENT_AREA: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
struct BBox {
    y0: usize,
    y1: usize, // inclusive
    x0: usize,
    x1: usize,
}

impl BBox {
    fn area(&self) -> usize {
        (self.y1 - self.y0 + 1) * (self.x1 - self.x0 + 1)
    }

    fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    fn union(&self, other: &BBox) -> BBox {
        BBox {
            y0: self.y0.min(other.y0),
            y1: self.y1.max(other.y1),
            x0: self.x0.min(other.x0),
            x1: self.x1.max(other.x1),
        }
    }
}

/// Returns the crop around the largest merged text-like region, or the
/// original image when nothing is found.
pub fn crop_largest_text_region(image: &Tensor) -> Result<Tensor> {
    let gray = rgb_to_gray(image)?;
    let (_, h, w) = gray.dims3("crop_largest_text_region")?;
    let mask = match binarize_minority(gray.data()) {
        Some(m) => m,
        None => return Ok(image.clone()),
    };
    let mut boxes = connected_component_boxes(&mask, h, w);
    boxes.retain(|b| b.area() >= MIN_COMPONENT_AREA);
    if boxes.is_empty() {
        return Ok(image.clone());
    }
    let merged = merge_line_boxes(boxes);
    let best = merged
        .into_iter()
        .max_by_key(|b| (b.area(), usize::MAX - b.y0, usize::MAX - b.x0))
        .unwrap();

    let y0 = best.y0.saturating_sub(PAD);
    let x0 = best.x0.saturating_sub(PAD);
    let y1 = (best.y1 + PAD).min(h - 1);
    let x1 = (best.x1 + PAD).min(w - 1);
    crop(image, y0, y1, x0, x1)
}

fn crop(image: &Tensor, y0: usize, y1: usize, x0: usize, x1: usize) -> Result<Tensor> {
    let (c, h, w) = image.dims3("crop")?;
    let (ch, cw) = (y1 - y0 + 1, x1 - x0 + 1);
    let src = image.data();
    let mut out = Vec::with_capacity(c * ch * cw);
    for ci in 0..c {
        for y in y0..=y1 {
            let row = &src[(ci * h + y) * w + x0..(ci * h + y) * w + x1 + 1];
            out.extend_from_slice(row);
        }
    }
    Tensor::new(vec![c, ch, cw], out)
}

/// Otsu threshold over a 256-bin histogram; the foreground is whichever side
/// has fewer pixels (text is assumed to cover less area than background).
/// None when the image is single-valued.
fn binarize_minority(gray: &[f64]) -> Option<Vec<bool>> {
    let mut hist = [0usize; 256];
    for &v in gray {
        hist[((v.clamp(0.0, 1.0)) * 255.0).round() as usize] += 1;
    }
    let total = gray.len();
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let mut best_t = None;
    let mut best_var = -1.0f64;
    let mut w0 = 0usize;
    let mut sum0 = 0.0;
    for t in 0..255 {
        w0 += hist[t];
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if between > best_var {
            best_var = between;
            best_t = Some(t);
        }
    }
    let t = best_t?;
    let thr = t as f64 / 255.0;
    let dark: Vec<bool> = gray.iter().map(|&v| v <= thr).collect();
    let dark_count = dark.iter().filter(|&&b| b).count();
    if dark_count * 2 <= total {
        Some(dark)
    } else {
        Some(dark.into_iter().map(|b| !b).collect())
    }
}

/// Bounding boxes of 8-connected foreground components.
fn connected_component_boxes(mask: &[bool], h: usize, w: usize) -> Vec<BBox> {
    let mut visited = vec![false; mask.len()];
    let mut boxes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || visited[start] {
            continue;
        }
        let mut bbox = BBox {
            y0: start / w,
            y1: start / w,
            x0: start % w,
            x1: start % w,
        };
        let mut area = 0usize;
        visited[start] = true;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            area += 1;
            let (y, x) = (idx / w, idx % w);
            bbox.y0 = bbox.y0.min(y);
            bbox.y1 = bbox.y1.max(y);
            bbox.x0 = bbox.x0.min(x);
            bbox.x1 = bbox.x1.max(x);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let ny = y as i64 + dy;
                    let nx = x as i64 + dx;
                    if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                        continue;
                    }
                    let nidx = ny as usize * w + nx as usize;
                    if mask[nidx] && !visited[nidx] {
                        visited[nidx] = true;
                        stack.push(nidx);
                    }
                }
            }
        }
        let _ = area;
        boxes.push(bbox);
    }
    boxes
}

/// Merges components that sit on the same text line: vertical overlap of at
/// least half the smaller height and a horizontal gap no wider than the
/// taller box's height. Repeats until stable.
fn merge_line_boxes(mut boxes: Vec<BBox>) -> Vec<BBox> {
    loop {
        let mut merged_any = false;
        let mut out: Vec<BBox> = Vec::new();
        'outer: for b in boxes {
            for o in &mut out {
                if mergeable(o, &b) {
                    *o = o.union(&b);
                    merged_any = true;
                    continue 'outer;
                }
            }
            out.push(b);
        }
        boxes = out;
        if !merged_any {
            return boxes;
        }
    }
}

fn mergeable(a: &BBox, b: &BBox) -> bool {
    let overlap = (a.y1.min(b.y1) as i64 - a.y0.max(b.y0) as i64 + 1).max(0) as usize;
    let min_h = a.height().min(b.height());
    if overlap * 2 < min_h {
        return false;
    }
    let gap = if a.x1 < b.x0 {
        b.x0 - a.x1
    } else if b.x1 < a.x0 {
        a.x0 - b.x1
    } else {
        0
    };
    gap <= a.height().max(b.height())
}
