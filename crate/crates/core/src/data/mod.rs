//! Dataset ingestion: manifests, image decoding, the title-region cropper,
//! and the synthetic dataset generator.

pub mod crop;
pub mod images;
pub mod manifest;
pub mod synth;

pub use crop::crop_largest_text_region;
pub use images::{load_image_tensor, rgb_image_to_tensor, tensor_to_rgb_image, MIN_SIDE};
pub use manifest::{
    build_manifest, denormalize_year, normalize_year, DatasetManifest, Sample, Split, SplitCounts,
};
pub use synth::{
    generate_synthetic, generate_synthetic_with, is_outlier_path, SynthParams, SynthSummary,
};
