//! Gait-based person identification.
//!
//! The crate covers the whole path from raw frames to an identity:
//!
//! * [`segmentation`]: grayscale conversion, background subtraction,
//!   morphological denoising, object detection and silhouette normalization.
//! * [`skeleton`]: Zhang–Suen thinning and a medial-axis alternative.
//! * [`neural`]: a small from-scratch 3D convolutional network (forward and
//!   backward passes, SGD, metrics, model files).
//! * [`synthgait`]: a procedural stick-figure walker used to synthesize
//!   labeled gait datasets.
//! * [`pipeline`]: manifests, clip construction, splitting, training,
//!   evaluation and the silhouette-vs-skeleton comparison.
//! * [`config`] and [`cli`]: run settings and the `gait3d` command.

pub mod cli;
pub mod config;
pub mod error;
pub mod neural;
pub mod pipeline;
pub mod seed;
pub mod segmentation;
pub mod skeleton;
pub mod synthgait;

pub use error::{Error, Result};
