//! Dataset manifests: per-year stratified sampling into train/val/test.
//!
//! Directory layout is `<root>/<year>/<image>`. For each year, `quota`
//! images are drawn with a per-year seeded shuffle and assigned to splits in
//! order, so the manifest is a pure function of (tree, seed, quota, splits).

use crate::error::{Error, Result};
use crate::util::hex_string;
use crate::rng::{derive_rng, STREAM_MANIFEST};
use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Format(format!("unknown split '{other}'"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            train: 20,
            val: 8,
            test: 28,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Path relative to the dataset root.
    pub path: String,
    pub year_raw: i32,
    /// `year_raw - base_year`; the regression target.
    pub year_norm: f64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub samples: Vec<Sample>,
    pub seed: u64,
    pub base_year: i32,
}

pub fn normalize_year(year_raw: i32, base_year: i32) -> f64 {
    (year_raw - base_year) as f64
}

pub fn denormalize_year(year_norm: f64, base_year: i32) -> i32 {
    year_norm.round() as i32 + base_year
}

const IMAGE_EXTS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Builds a manifest over `<root>/<year>/...`. When `required_years` is
/// given, every year in the range must be present; otherwise the years found
/// on disk are used. Errors list every deficient year.
pub fn build_manifest(
    root: &Path,
    seed: u64,
    quota: usize,
    splits: SplitCounts,
    base_year: i32,
    required_years: Option<(i32, i32)>,
) -> Result<DatasetManifest> {
    if quota != splits.total() {
        return Err(Error::InvalidArgument(format!(
            "quota ({quota}) must equal the split total ({})",
            splits.total()
        )));
    }
    let mut years: Vec<i32> = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        if let Ok(year) = entry.file_name().to_string_lossy().parse::<i32>() {
            years.push(year);
        }
    }
    years.sort_unstable();
    if let Some((lo, hi)) = required_years {
        let missing: Vec<i32> = (lo..=hi).filter(|y| !years.contains(y)).collect();
        if !missing.is_empty() {
            return Err(Error::Dataset(format!(
                "missing year directories: {}",
                missing
                    .iter()
                    .map(|y| y.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
        years = (lo..=hi).collect();
    }
    if years.is_empty() {
        return Err(Error::Dataset(format!(
            "no year directories under {}",
            root.display()
        )));
    }

    let mut samples = Vec::new();
    let mut deficient = Vec::new();
    for &year in &years {
        let dir = root.join(year.to_string());
        let mut files: Vec<String> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .filter(|e| {
                e.path()
                    .extension()
                    .map(|x| IMAGE_EXTS.contains(&x.to_string_lossy().to_lowercase().as_str()))
                    .unwrap_or(false)
            })
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        if files.len() < quota {
            deficient.push(format!("{year} ({} images, need {quota})", files.len()));
            continue;
        }
        files.sort();
        files.shuffle(&mut derive_rng(seed, STREAM_MANIFEST, year as u64));
        for (i, file) in files.into_iter().take(quota).enumerate() {
            let split = if i < splits.train {
                Split::Train
            } else if i < splits.train + splits.val {
                Split::Val
            } else {
                Split::Test
            };
            samples.push(Sample {
                path: format!("{year}/{file}"),
                year_raw: year,
                year_norm: normalize_year(year, base_year),
                split,
            });
        }
    }
    if !deficient.is_empty() {
        return Err(Error::Dataset(format!(
            "years below quota: {}",
            deficient.join("; ")
        )));
    }
    Ok(DatasetManifest {
        samples,
        seed,
        base_year,
    })
}

impl DatasetManifest {
    pub fn split_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for s in &self.samples {
            match s.split {
                Split::Train => c.0 += 1,
                Split::Val => c.1 += 1,
                Split::Test => c.2 += 1,
            }
        }
        c
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    fn body(&self) -> String {
        let mut body = String::from("path,year_raw,year_norm,split\n");
        for s in &self.samples {
            body.push_str(&format!(
                "{},{},{},{}\n",
                s.path, s.year_raw, s.year_norm, s.split
            ));
        }
        body
    }

    /// CSV with a seed/base-year/checksum header. Paths must not contain
    /// commas (the builder never produces any).
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(s) = self.samples.iter().find(|s| s.path.contains(',')) {
            return Err(Error::Dataset(format!(
                "path contains a comma: {}",
                s.path
            )));
        }
        let body = self.body();
        let checksum = hex_string(&Sha256::digest(body.as_bytes()));
        let mut out = String::from("# yearest-manifest v1\n");
        out.push_str(&format!("# seed={}\n", self.seed));
        out.push_str(&format!("# base_year={}\n", self.base_year));
        out.push_str(&format!("# checksum={checksum}\n"));
        out.push_str(&body);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        match lines.next() {
            Some("# yearest-manifest v1") => {}
            _ => {
                return Err(Error::Format(format!(
                    "{} is not a manifest",
                    path.display()
                )))
            }
        }
        let mut seed = 0u64;
        let mut base_year = 0i32;
        let mut checksum = String::new();
        for line in lines.by_ref() {
            if let Some(v) = line.strip_prefix("# seed=") {
                seed = v.parse().map_err(|_| Error::Format("bad seed".into()))?;
            } else if let Some(v) = line.strip_prefix("# base_year=") {
                base_year = v.parse().map_err(|_| Error::Format("bad base_year".into()))?;
            } else if let Some(v) = line.strip_prefix("# checksum=") {
                checksum = v.to_string();
                break;
            } else {
                return Err(Error::Format(format!("unexpected header line: {line}")));
            }
        }
        let body_start = text
            .find("# checksum=")
            .and_then(|i| text[i..].find('\n').map(|j| i + j + 1))
            .ok_or_else(|| Error::Format("manifest missing checksum header".into()))?;
        let body = &text[body_start..];
        let actual = hex_string(&Sha256::digest(body.as_bytes()));
        if actual != checksum {
            return Err(Error::Format(format!(
                "manifest checksum mismatch in {}",
                path.display()
            )));
        }

        let mut rows = body.lines();
        match rows.next() {
            Some("path,year_raw,year_norm,split") => {}
            other => {
                return Err(Error::Format(format!(
                    "unexpected manifest columns: {other:?}"
                )))
            }
        }
        let mut samples = Vec::new();
        for row in rows {
            if row.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = row.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::Format(format!("bad manifest row: {row}")));
            }
            samples.push(Sample {
                path: cols[0].to_string(),
                year_raw: cols[1]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad year in row: {row}")))?,
                year_norm: cols[2]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad year_norm in row: {row}")))?,
                split: Split::parse(cols[3])?,
            });
        }
        Ok(DatasetManifest {
            samples,
            seed,
            base_year,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use tempfile::tempdir;

    fn toy_tree(root: &Path, years: &[i32], per_year: usize) {
        for &y in years {
            let dir = root.join(y.to_string());
            std::fs::create_dir_all(&dir).unwrap();
            for i in 0..per_year {
                image::RgbImage::new(4, 4)
                    .save(dir.join(format!("img_{i:03}.png")))
                    .unwrap();
            }
        }
    }

    #[test]
    fn toy_tree_split_arithmetic() {
        let dir = tempdir().unwrap();
        toy_tree(dir.path(), &[2000, 2001, 2002, 2003], 5);
        let splits = SplitCounts {
            train: 3,
            val: 1,
            test: 1,
        };
        let m = build_manifest(dir.path(), 7, 5, splits, 2000, None).unwrap();
        assert_eq!(m.split_counts(), (12, 4, 4));
        // Per-year stratification is exact.
        for y in 2000..=2003 {
            let per_split: Vec<usize> = [Split::Train, Split::Val, Split::Test]
                .iter()
                .map(|&s| m.samples.iter().filter(|x| x.year_raw == y && x.split == s).count())
                .collect();
            assert_eq!(per_split, vec![3, 1, 1]);
        }
    }

    #[test]
    fn paper_protocol_totals() {
        // 85 years x 56 images at (20, 8, 28) gives 1700/680/2380. Checked
        // with a reduced tree shape: the arithmetic is quota-proportional.
        let dir = tempdir().unwrap();
        toy_tree(dir.path(), &[1932, 1933, 1934], 56);
        let m = build_manifest(dir.path(), 1, 56, SplitCounts::default(), 1932, None).unwrap();
        assert_eq!(m.split_counts(), (60, 24, 84));
        assert_eq!(m.samples.len(), 3 * 56);
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir = tempdir().unwrap();
        toy_tree(dir.path(), &[1990, 1991], 6);
        let splits = SplitCounts {
            train: 2,
            val: 2,
            test: 2,
        };
        let p1 = dir.path().join("m1.csv");
        let p2 = dir.path().join("m2.csv");
        build_manifest(dir.path(), 5, 6, splits, 1990, None)
            .unwrap()
            .save(&p1)
            .unwrap();
        build_manifest(dir.path(), 5, 6, splits, 1990, None)
            .unwrap()
            .save(&p2)
            .unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let other = build_manifest(dir.path(), 6, 6, splits, 1990, None).unwrap();
        assert_ne!(
            other,
            DatasetManifest::load(&p1).unwrap(),
            "different seed should shuffle differently"
        );
    }

    #[test]
    fn deficient_years_are_listed() {
        let dir = tempdir().unwrap();
        toy_tree(dir.path(), &[1970], 3);
        toy_tree(dir.path(), &[1971], 10);
        let splits = SplitCounts {
            train: 6,
            val: 2,
            test: 2,
        };
        let err = build_manifest(dir.path(), 1, 10, splits, 1970, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("1970") && !msg.contains("1971"), "{msg}");
    }

    #[test]
    fn missing_required_year_is_named() {
        let dir = tempdir().unwrap();
        toy_tree(dir.path(), &[1980, 1982], 2);
        let splits = SplitCounts {
            train: 1,
            val: 0,
            test: 1,
        };
        let err =
            build_manifest(dir.path(), 1, 2, splits, 1980, Some((1980, 1982))).unwrap_err();
        assert!(err.to_string().contains("1981"));
    }

    #[test]
    fn splits_are_disjoint() {
        let dir = tempdir().unwrap();
        toy_tree(dir.path(), &[1950, 1960], 8);
        let splits = SplitCounts {
            train: 4,
            val: 2,
            test: 2,
        };
        let m = build_manifest(dir.path(), 3, 8, splits, 1950, None).unwrap();
        let paths: HashSet<&str> = m.samples.iter().map(|s| s.path.as_str()).collect();
        assert_eq!(paths.len(), m.samples.len());
    }

    #[test]
    fn normalization_round_trips() {
        for y in 1932..=2016 {
            assert_eq!(denormalize_year(normalize_year(y, 1932), 1932), y);
        }
        assert_eq!(normalize_year(1932, 1932), 0.0);
        assert_eq!(normalize_year(2016, 1932), 84.0);
    }

    #[test]
    fn save_load_round_trip_and_checksum_guard() {
        let dir = tempdir().unwrap();
        toy_tree(dir.path(), &[2010], 4);
        let splits = SplitCounts {
            train: 2,
            val: 1,
            test: 1,
        };
        let m = build_manifest(dir.path(), 9, 4, splits, 2000, None).unwrap();
        let path = dir.path().join("m.csv");
        m.save(&path).unwrap();
        assert_eq!(DatasetManifest::load(&path).unwrap(), m);

        // Tampering must be detected.
        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replace("2010/", "2011/");
        std::fs::write(&path, text).unwrap();
        assert!(DatasetManifest::load(&path).is_err());
    }
}
