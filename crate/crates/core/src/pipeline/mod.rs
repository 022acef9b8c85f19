//! Dataset handling, training and the silhouette/skeleton comparison.

pub mod clips;
pub mod compare;
pub mod manifest;
pub mod preprocess;
pub mod train;

pub use clips::{build_clips, clip_offsets, split_dataset, Clip, Split};
pub use compare::{compare_modes, resolve_spec, ComparisonReport, Experiment, ModeResult, REPORT_ROWS};
pub use manifest::{Manifest, ManifestRecord, Status};
pub use preprocess::{preprocess_manifest, preprocess_sequence, InputMode, ProcessedSequence};
pub use train::{evaluate, predict, train, EpochMetrics, Metrics, MetricsLog, TrainConfig};
pub use crate::neural::{load_model, save_model};
