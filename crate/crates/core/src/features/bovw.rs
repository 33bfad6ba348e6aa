//! Bag-of-visual-words embedding: descriptor histograms over a codebook.

use crate::error::Result;
use crate::features::kmeans::Codebook;
use crate::features::sift::Descriptor;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BovwNorm {
    /// Raw counts; they sum to the number of descriptors.
    Raw,
    /// L1-normalized histogram (a probability vector, or all-zero when the
    /// image had no descriptors).
    L1,
}

impl BovwNorm {
    pub fn as_str(&self) -> &'static str {
        match self {
            BovwNorm::Raw => "raw",
            BovwNorm::L1 => "l1",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BovwVector {
    pub counts: Vec<f64>,
    pub normalization: BovwNorm,
}

/// Histograms descriptors against the codebook. An empty descriptor list
/// yields the zero vector.
pub fn bovw_embed(
    descriptors: &[Descriptor],
    codebook: &Codebook,
    normalization: BovwNorm,
) -> Result<BovwVector> {
    let mut counts = vec![0.0f64; codebook.k];
    for d in descriptors {
        counts[codebook.assign(&d.vector)?] += 1.0;
    }
    if normalization == BovwNorm::L1 {
        let total: f64 = counts.iter().sum();
        if total > 0.0 {
            for c in &mut counts {
                *c /= total;
            }
        }
    }
    Ok(BovwVector {
        counts,
        normalization,
    })
}
