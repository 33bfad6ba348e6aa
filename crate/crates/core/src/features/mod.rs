//! Shape and local-feature pipelines: edge maps, keypoint descriptors,
//! k-means codebooks, and BoVW embeddings.

pub mod bovw;
pub mod edge;
pub mod kmeans;
pub mod sift;

pub use bovw::{bovw_embed, BovwNorm, BovwVector};
pub use edge::{edge_detect, rgb_to_gray};
pub use kmeans::{kmeans_fit, Codebook};
pub use sift::{extract_descriptors, extract_descriptors_with, Descriptor, SiftParams, DESCRIPTOR_DIM};
