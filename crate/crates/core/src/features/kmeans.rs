//! k-means codebook over descriptor space.
//!
//! k-means++ seeding, Lloyd iterations until the largest centroid movement
//! drops below 1e-4 (or 300 iterations). Clusters that empty out are
//! re-seeded at the point farthest from its assigned centroid.

use crate::error::{Error, Result};
use crate::rng::{derive_rng, STREAM_KMEANS};
use rand::Rng;
use crate::util::hex_string;
use sha2::{Digest, Sha256};
use std::path::Path;

const MAX_ITERS: usize = 300;
const MOVE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub k: usize,
    pub dim: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Final within-cluster sum of squared distances.
    pub inertia: f64,
    pub seed: u64,
    /// Inertia recorded at each Lloyd iteration (non-increasing).
    pub inertia_history: Vec<f64>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fits `k` centroids on the given points (training-split descriptors only).
pub fn kmeans_fit(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Codebook> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if points.len() < k {
        return Err(Error::InvalidArgument(format!(
            "k-means needs at least k={k} points, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::shape("kmeans_fit", "points have mixed dimensions"));
    }

    let mut rng = derive_rng(seed, STREAM_KMEANS, 0);

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = (rng.random::<f64>() * points.len() as f64) as usize % points.len();
    centroids.push(points[first].clone());
    let mut min_d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = min_d2.iter().sum();
        let next = if total <= 0.0 {
            // All remaining mass at distance zero: pick the first point not
            // already chosen, for determinism.
            (0..points.len())
                .find(|i| centroids.iter().all(|c| c != &points[*i]))
                .unwrap_or(0)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in min_d2.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.push(points[next].clone());
        let c = centroids.last().unwrap();
        for (i, p) in points.iter().enumerate() {
            let d = dist2(p, c);
            if d < min_d2[i] {
                min_d2[i] = d;
            }
        }
    }

    // Lloyd iterations.
    let mut assignment = vec![0usize; points.len()];
    let mut inertia_history = Vec::new();
    for _ in 0..MAX_ITERS {
        // E-step: nearest centroid, ties to the lowest index.
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = dist2(p, &centroids[0]);
            for (j, c) in centroids.iter().enumerate().skip(1) {
                let d = dist2(p, c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            assignment[i] = best;
            inertia += best_d;
        }
        inertia_history.push(inertia);

        // M-step.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut movement = 0.0f64;
        for j in 0..k {
            if counts[j] == 0 {
                // Re-seed at the point farthest from its centroid.
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        dist2(&points[a], &centroids[assignment[a]])
                            .partial_cmp(&dist2(&points[b], &centroids[assignment[b]]))
                            .unwrap()
                    })
                    .unwrap();
                movement = movement.max(dist2(&centroids[j], &points[far]).sqrt());
                centroids[j] = points[far].clone();
                continue;
            }
            let new: Vec<f64> = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            movement = movement.max(dist2(&centroids[j], &new).sqrt());
            centroids[j] = new;
        }
        if movement < MOVE_TOL {
            break;
        }
    }
    // Final inertia under the final centroids.
    let inertia: f64 = points
        .iter()
        .map(|p| {
            centroids
                .iter()
                .map(|c| dist2(p, c))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();

    Ok(Codebook {
        k,
        dim,
        centroids,
        inertia,
        seed,
        inertia_history,
    })
}

impl Codebook {
    /// Index of the nearest centroid (Euclidean; ties to the lowest index).
    pub fn assign(&self, v: &[f64]) -> Result<usize> {
        if v.len() != self.dim {
            return Err(Error::shape(
                "codebook assign",
                format!("vector has {} dims, codebook {}", v.len(), self.dim),
            ));
        }
        let mut best = 0usize;
        let mut best_d = dist2(v, &self.centroids[0]);
        for (j, c) in self.centroids.iter().enumerate().skip(1) {
            let d = dist2(v, c);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        Ok(best)
    }

    /// Content hash over k, dim, seed and centroid bytes; used to assert the
    /// codebook is not mutated by embedding.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.k.to_le_bytes());
        hasher.update(self.dim.to_le_bytes());
        hasher.update(self.seed.to_le_bytes());
        for c in &self.centroids {
            for v in c {
                hasher.update(v.to_le_bytes());
            }
        }
        hex_string(&hasher.finalize())
    }

    /// Text format: a header line with k/dim/seed/inertia, then one line of
    /// whitespace-separated floats per centroid.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!(
            "# yearest-codebook v1 k={} dim={} seed={} inertia={}\n",
            self.k, self.dim, self.seed, self.inertia
        ));
        for c in &self.centroids {
            let row: Vec<String> = c.iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Codebook> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty codebook file".into()))?;
        if !header.starts_with("# yearest-codebook v1") {
            return Err(Error::Format(format!("{} is not a codebook", path.display())));
        }
        let mut k = 0usize;
        let mut dim = 0usize;
        let mut seed = 0u64;
        let mut inertia = 0.0f64;
        for field in header.split_whitespace() {
            if let Some(v) = field.strip_prefix("k=") {
                k = v.parse().map_err(|_| Error::Format("bad k".into()))?;
            } else if let Some(v) = field.strip_prefix("dim=") {
                dim = v.parse().map_err(|_| Error::Format("bad dim".into()))?;
            } else if let Some(v) = field.strip_prefix("seed=") {
                seed = v.parse().map_err(|_| Error::Format("bad seed".into()))?;
            } else if let Some(v) = field.strip_prefix("inertia=") {
                inertia = v.parse().map_err(|_| Error::Format("bad inertia".into()))?;
            }
        }
        let mut centroids = Vec::with_capacity(k);
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(|t| t.parse::<f64>()).collect();
            let row = row.map_err(|_| Error::Format("bad centroid value".into()))?;
            if row.len() != dim {
                return Err(Error::Format(format!(
                    "centroid has {} dims, header says {dim}",
                    row.len()
                )));
            }
            centroids.push(row);
        }
        if centroids.len() != k {
            return Err(Error::Format(format!(
                "{} centroids found, header says {k}",
                centroids.len()
            )));
        }
        Ok(Codebook {
            k,
            dim,
            centroids,
            inertia,
            seed,
            inertia_history: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_points_k_clusters_has_zero_inertia() {
        let points = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let cb = kmeans_fit(&points, 3, 1).unwrap();
        assert_eq!(cb.inertia, 0.0);
        for p in &points {
            assert!(cb.centroids.contains(p));
        }
    }

    #[test]
    fn inertia_is_non_increasing() {
        let mut rng = derive_rng(11, STREAM_KMEANS, 7);
        let points: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..8).map(|_| rng.random::<f64>()).collect())
            .collect();
        let cb = kmeans_fit(&points, 10, 3).unwrap();
        for pair in cb.inertia_history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "inertia rose: {pair:?}");
        }
    }

    #[test]
    fn two_separated_blobs_are_recovered() {
        let mut rng = derive_rng(12, STREAM_KMEANS, 8);
        let mut points = Vec::new();
        let gauss = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
            // Box-Muller
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        for _ in 0..300 {
            points.push(vec![gauss(&mut rng) * 0.05, gauss(&mut rng) * 0.05]);
        }
        for _ in 0..300 {
            points.push(vec![3.0 + gauss(&mut rng) * 0.05, 3.0 + gauss(&mut rng) * 0.05]);
        }
        let cb = kmeans_fit(&points, 2, 5).unwrap();
        let mut centers = cb.centroids.clone();
        centers.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert!(dist2(&centers[0], &[0.0, 0.0]).sqrt() < 0.1);
        assert!(dist2(&centers[1], &[3.0, 3.0]).sqrt() < 0.1);
    }

    #[test]
    fn fewer_points_than_k_errors() {
        let points = vec![vec![0.0], vec![1.0]];
        assert!(kmeans_fit(&points, 3, 1).is_err());
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let mut rng = derive_rng(13, STREAM_KMEANS, 9);
        let points: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let a = kmeans_fit(&points, 7, 2).unwrap();
        let b = kmeans_fit(&points, 7, 2).unwrap();
        assert_eq!(a, b);
        let c = kmeans_fit(&points, 7, 3).unwrap();
        assert!(a.centroids != c.centroids || a.inertia == c.inertia);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let points = vec![vec![0.25, -1.5], vec![1e-7, 3.125], vec![9.0, 2.0]];
        let cb = kmeans_fit(&points, 2, 4).unwrap();
        let path = dir.path().join("cb.txt");
        cb.save(&path).unwrap();
        let loaded = Codebook::load(&path).unwrap();
        assert_eq!(loaded.centroids, cb.centroids);
        assert_eq!(loaded.k, cb.k);
        assert_eq!(loaded.inertia, cb.inertia);
        assert_eq!(loaded.content_hash(), cb.content_hash());
    }
}
