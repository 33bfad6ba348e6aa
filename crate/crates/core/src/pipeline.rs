//! Ties manifests to model inputs for the three estimation methods, with a
//! content-addressed descriptor cache for the feature pipeline.

use crate::data::{load_image_tensor, DatasetManifest, Split, MIN_SIDE};
use crate::error::{Error, Result};
use crate::features::{
    bovw_embed, edge_detect, extract_descriptors, kmeans_fit, BovwNorm, Codebook, Descriptor,
    DESCRIPTOR_DIM,
};
use crate::tensor::Tensor;
use crate::util::sha256_hex;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Raw RGB pixels into the CNN.
    Image,
    /// Sobel edge maps into the CNN.
    Shape,
    /// SIFT + BoVW histograms into the MLP.
    Feature,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Image => "image",
            Method::Shape => "shape",
            Method::Feature => "feature",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "image" => Ok(Method::Image),
            "shape" => Ok(Method::Shape),
            "feature" => Ok(Method::Feature),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub input: Tensor,
    pub target: f64,
    pub split: Split,
    pub path: String,
}

#[derive(Debug, Clone)]
pub struct FeatureOptions {
    pub k: usize,
    pub max_keypoints: usize,
    pub norm: BovwNorm,
    pub seed: u64,
    /// Descriptor cache directory (content-addressed by image bytes).
    pub cache_dir: Option<PathBuf>,
    /// Pre-fitted codebook; when absent one is fitted on the train split.
    pub codebook: Option<Codebook>,
}

pub struct LoadedDataset {
    pub samples: Vec<LoadedSample>,
    /// Present for the feature method.
    pub codebook: Option<Codebook>,
}

impl LoadedDataset {
    pub fn pairs(&self, split: Split) -> Vec<(Tensor, f64)> {
        self.samples
            .iter()
            .filter(|s| s.split == split)
            .map(|s| (s.input.clone(), s.target))
            .collect()
    }

    pub fn split_refs(&self, split: Split) -> Vec<&LoadedSample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }
}

/// Loads every manifest sample as a model input for the given method.
///
/// For `Method::Feature` the codebook is fitted on training-split
/// descriptors only (unless one is supplied), then every image is embedded.
pub fn load_method_inputs(
    manifest: &DatasetManifest,
    root: &Path,
    method: Method,
    feature_opts: Option<&FeatureOptions>,
) -> Result<LoadedDataset> {
    match method {
        Method::Image | Method::Shape => {
            let mut samples = Vec::with_capacity(manifest.samples.len());
            for s in &manifest.samples {
                let img = load_image_tensor(&root.join(&s.path), MIN_SIDE)?;
                let input = match method {
                    Method::Image => img,
                    Method::Shape => edge_detect(&img)?,
                    Method::Feature => unreachable!(),
                };
                samples.push(LoadedSample {
                    input,
                    target: s.year_norm,
                    split: s.split,
                    path: s.path.clone(),
                });
            }
            Ok(LoadedDataset {
                samples,
                codebook: None,
            })
        }
        Method::Feature => {
            let opts = feature_opts.ok_or_else(|| {
                Error::InvalidArgument("feature method requires feature options".into())
            })?;
            let mut all_descriptors: Vec<(usize, Vec<Descriptor>)> = Vec::new();
            for (idx, s) in manifest.samples.iter().enumerate() {
                let descs = descriptors_for_image(
                    &root.join(&s.path),
                    opts.cache_dir.as_deref(),
                    opts.max_keypoints,
                )?;
                all_descriptors.push((idx, descs));
            }
            let codebook = match &opts.codebook {
                Some(cb) => cb.clone(),
                None => {
                    let train_descs: Vec<Vec<f64>> = all_descriptors
                        .iter()
                        .filter(|(idx, _)| manifest.samples[*idx].split == Split::Train)
                        .flat_map(|(_, ds)| ds.iter().map(|d| d.vector.clone()))
                        .collect();
                    if train_descs.len() < opts.k {
                        return Err(Error::Dataset(format!(
                            "training split yields {} descriptors, need at least k={}",
                            train_descs.len(),
                            opts.k
                        )));
                    }
                    kmeans_fit(&train_descs, opts.k, opts.seed)?
                }
            };
            let mut samples = Vec::with_capacity(manifest.samples.len());
            for (idx, descs) in all_descriptors {
                let s = &manifest.samples[idx];
                let bovw = bovw_embed(&descs, &codebook, opts.norm)?;
                samples.push(LoadedSample {
                    input: Tensor::new(vec![codebook.k], bovw.counts)?,
                    target: s.year_norm,
                    split: s.split,
                    path: s.path.clone(),
                });
            }
            Ok(LoadedDataset {
                samples,
                codebook: Some(codebook),
            })
        }
    }
}

/// Extracts descriptors for an image, using `<cache>/<sha256>.desc` when a
/// cache directory is given.
pub fn descriptors_for_image(
    image_path: &Path,
    cache_dir: Option<&Path>,
    max_keypoints: usize,
) -> Result<Vec<Descriptor>> {
    let cache_path = match cache_dir {
        Some(dir) => {
            let bytes = std::fs::read(image_path)?;
            let key = sha256_hex(&bytes);
            let path = dir.join(format!("{key}.desc"));
            if path.exists() {
                if let Ok(ds) = load_descriptors(&path) {
                    if ds.len() <= max_keypoints {
                        return Ok(ds);
                    }
                }
            }
            Some(path)
        }
        None => None,
    };
    let img = load_image_tensor(image_path, MIN_SIDE)?;
    let descs = extract_descriptors(&img, max_keypoints)?;
    if let Some(path) = cache_path {
        save_descriptors(&path, &descs)?;
    }
    Ok(descs)
}

const DESC_MAGIC: &[u8; 8] = b"YDESC01\n";

pub fn save_descriptors(path: &Path, descs: &[Descriptor]) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + descs.len() * (4 + DESCRIPTOR_DIM) * 8);
    buf.extend_from_slice(DESC_MAGIC);
    buf.extend_from_slice(&(descs.len() as u32).to_le_bytes());
    for d in descs {
        for v in [d.x, d.y, d.scale, d.orientation] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &d.vector {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_descriptors(path: &Path) -> Result<Vec<Descriptor>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..8] != DESC_MAGIC {
        return Err(Error::Format(format!(
            "{} is not a descriptor cache",
            path.display()
        )));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let rec = (4 + DESCRIPTOR_DIM) * 8;
    if bytes.len() != 12 + count * rec {
        return Err(Error::Format("truncated descriptor cache".into()));
    }
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let base = 12 + i * rec;
        let f = |j: usize| -> f64 {
            f64::from_le_bytes(bytes[base + j * 8..base + (j + 1) * 8].try_into().unwrap())
        };
        out.push(Descriptor {
            x: f(0),
            y: f(1),
            scale: f(2),
            orientation: f(3),
            vector: (0..DESCRIPTOR_DIM).map(|j| f(4 + j)).collect(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_manifest, generate_synthetic, SplitCounts};
    use tempfile::tempdir;

    #[test]
    fn descriptor_cache_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.desc");
        let descs = vec![Descriptor {
            x: 3.5,
            y: 9.0,
            scale: 2.0,
            orientation: -0.5,
            vector: (0..DESCRIPTOR_DIM).map(|i| i as f64 / 128.0).collect(),
        }];
        save_descriptors(&path, &descs).unwrap();
        let loaded = load_descriptors(&path).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].vector, descs[0].vector);
        assert_eq!(loaded[0].x, 3.5);
    }

    #[test]
    fn image_and_shape_inputs_have_expected_channels() {
        let dir = tempdir().unwrap();
        generate_synthetic(dir.path(), &[1950, 2000], 4, 0.0, 3).unwrap();
        let splits = SplitCounts {
            train: 2,
            val: 1,
            test: 1,
        };
        let manifest = build_manifest(dir.path(), 3, 4, splits, 1932, None).unwrap();
        let img = load_method_inputs(&manifest, dir.path(), Method::Image, None).unwrap();
        assert_eq!(img.samples.len(), 8);
        assert_eq!(img.samples[0].input.shape()[0], 3);
        let shape = load_method_inputs(&manifest, dir.path(), Method::Shape, None).unwrap();
        assert_eq!(shape.samples[0].input.shape()[0], 1);
    }

    #[test]
    fn feature_inputs_use_a_train_split_codebook() {
        let dir = tempdir().unwrap();
        generate_synthetic(dir.path(), &[1940, 2010], 6, 0.0, 9).unwrap();
        let splits = SplitCounts {
            train: 4,
            val: 1,
            test: 1,
        };
        let manifest = build_manifest(dir.path(), 9, 6, splits, 1932, None).unwrap();
        let opts = FeatureOptions {
            k: 4,
            max_keypoints: 500,
            norm: BovwNorm::Raw,
            seed: 5,
            cache_dir: Some(dir.path().join("cache")),
            codebook: None,
        };
        let ds = load_method_inputs(&manifest, dir.path(), Method::Feature, Some(&opts)).unwrap();
        let cb = ds.codebook.expect("codebook fitted");
        assert_eq!(cb.k, 4);
        for s in &ds.samples {
            assert_eq!(s.input.shape(), &[4]);
        }
        // Second load hits the cache and reproduces identical embeddings.
        let ds2 = load_method_inputs(&manifest, dir.path(), Method::Feature, Some(&opts)).unwrap();
        for (a, b) in ds.samples.iter().zip(&ds2.samples) {
            assert_eq!(a.input.data(), b.input.data());
        }
    }
}
