//! Sliding-window clips and the per-subject train/test split.

use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::SliceRandom;

use super::manifest::Manifest;
use crate::error::{Error, Result};
use crate::neural::Tensor4;
use crate::seed::{rng, stream};
use crate::segmentation::BinaryMask;

/// A window of consecutive processed frames from one sequence.
#[derive(Clone, Debug)]
pub struct Clip {
    frames: Arc<Vec<BinaryMask>>,
    start: usize,
    len: usize,
    /// Zero-based class index (subject id - 1).
    pub label: usize,
    pub sequence_dir: PathBuf,
}

impl Clip {
    pub fn new(
        frames: Arc<Vec<BinaryMask>>,
        start: usize,
        len: usize,
        label: usize,
        sequence_dir: PathBuf,
    ) -> Result<Self> {
        if len == 0 || start + len > frames.len() {
            return Err(Error::Parameter(format!(
                "clip [{start}, {}) does not fit {} frames",
                start + len,
                frames.len()
            )));
        }
        let (w, h) = (frames[start].width(), frames[start].height());
        if frames[start..start + len].iter().any(|f| f.width() != w || f.height() != h) {
            return Err(Error::Dimension("clip frames differ in size".into()));
        }
        Ok(Self { frames, start, len, label, sequence_dir })
    }

    pub fn start_frame(&self) -> usize {
        self.start
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn subject_id(&self) -> u32 {
        self.label as u32 + 1
    }

    pub fn frames(&self) -> &[BinaryMask] {
        &self.frames[self.start..self.start + self.len]
    }

    /// `[1, len, height, width]` with foreground 1.0 and background 0.0.
    pub fn to_tensor(&self) -> Tensor4 {
        let first = &self.frames[self.start];
        let (h, w) = (first.height(), first.width());
        let data = self
            .frames()
            .iter()
            .flat_map(|f| f.data().iter().map(|&v| if v { 1.0 } else { 0.0 }))
            .collect();
        Tensor4::new([1, self.len, h, w], data).expect("consistent frame sizes")
    }
}

/// Window offsets `0, stride, 2 * stride, ...` with `offset + clip_len <= len`.
pub fn clip_offsets(len: usize, clip_len: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 || clip_len == 0 {
        return Err(Error::Parameter(format!(
            "clip length and stride must be positive (got {clip_len}, {stride})"
        )));
    }
    if len < clip_len {
        return Ok(Vec::new());
    }
    Ok((0..=(len - clip_len) / stride).map(|i| i * stride).collect())
}

/// All windows of one sequence. Sequences shorter than `clip_len` yield no
/// clips and a warning.
pub fn build_clips(
    frames: &Arc<Vec<BinaryMask>>,
    clip_len: usize,
    stride: usize,
    label: usize,
    sequence_dir: &std::path::Path,
) -> Result<Vec<Clip>> {
    let offsets = clip_offsets(frames.len(), clip_len, stride)?;
    if offsets.is_empty() {
        log::warn!(
            "{}: {} usable frames, fewer than the clip length {clip_len}; skipped",
            sequence_dir.display(),
            frames.len()
        );
    }
    offsets
        .into_iter()
        .map(|s| Clip::new(frames.clone(), s, clip_len, label, sequence_dir.to_path_buf()))
        .collect()
}

/// Record indices of each partition, both in manifest order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified sequence-level split: each subject's sequences are shuffled
/// and the first `round(ratio * count)` (kept within `1..count`) go to
/// training.
pub fn split_dataset(manifest: &Manifest, ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Parameter(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let n = manifest.subject_count();
    let mut by_subject: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, r) in manifest.records.iter().enumerate() {
        by_subject[r.subject_id as usize - 1].push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (s, mut seqs) in by_subject.into_iter().enumerate() {
        let count = seqs.len();
        if count < 2 {
            return Err(Error::Dataset(format!(
                "subject {} has {count} sequence(s); a split needs at least 2",
                s + 1
            )));
        }
        seqs.shuffle(&mut rng(seed, &[stream::SPLIT, s as u64 + 1]));
        let n_train = ((ratio * count as f64).round() as usize).clamp(1, count - 1);
        train.extend_from_slice(&seqs[..n_train]);
        test.extend_from_slice(&seqs[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}
