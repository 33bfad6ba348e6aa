//! Year estimation from title images via robust regression.
//!
//! Three pipelines predict a movie's release year (normalized so the first
//! year is 0) from an image of its title text:
//!
//! 1. **Image** – a regression CNN over raw RGB pixels. Global average
//!    pooling makes the head independent of input spatial size.
//! 2. **Shape** – the same CNN over Sobel edge maps, removing color cues.
//! 3. **Feature** – SIFT descriptors quantized against a k-means codebook
//!    into bag-of-visual-words histograms, regressed by an MLP.
//!
//! Training starts with MSE and switches to Tukey's biweight loss once the
//! validation loss stabilizes (or at a deadline epoch), so early learning is
//! stable while outlier titles stop dominating later updates.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod loss;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod run;
pub mod tensor;
pub mod trainer;
pub mod util;

pub use error::{Error, Result};
pub use tensor::Tensor;
