//! Turning raw sequence directories into normalized binary frames.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use super::manifest::{frame_file_name, Manifest, ManifestRecord};
use crate::error::{Error, Result};
use crate::segmentation::{read_gray, segment_frame, BinaryMask, BoundingBox, FrameStages, GrayFrame, SegmentationConfig};
use crate::skeleton::{medial_axis, thin};

/// What the network sees of each frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InputMode {
    Silhouette,
    Skeleton,
    Medial,
}

impl InputMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InputMode::Silhouette => "silhouette",
            InputMode::Skeleton => "skeleton",
            InputMode::Medial => "medial",
        }
    }

    /// Converts a normalized silhouette into this mode's representation.
    pub fn apply(self, silhouette: &BinaryMask) -> BinaryMask {
        match self {
            InputMode::Silhouette => silhouette.clone(),
            InputMode::Skeleton => thin(silhouette).into_mask(),
            InputMode::Medial => medial_axis(silhouette).into_mask(),
        }
    }
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "silhouette" => Ok(InputMode::Silhouette),
            "skeleton" => Ok(InputMode::Skeleton),
            "medial" => Ok(InputMode::Medial),
            other => Err(Error::Config(format!(
                "unknown input mode {other:?}, expected silhouette, skeleton or medial"
            ))),
        }
    }
}

/// Normalized frames of one sequence, in time order.
#[derive(Clone, Debug)]
pub struct ProcessedSequence {
    pub record: ManifestRecord,
    pub frames: Arc<Vec<BinaryMask>>,
    /// Indices of the source frames that produced `frames`.
    pub kept: Vec<usize>,
    /// Walking frames discarded because nothing was detected.
    pub skipped: usize,
}

/// Segments the frames of a directory and calls `visit` with each frame
/// index and its stages. Without an explicit `background`, frame 0 is the
/// background and frames `1..frame_count` are segmented against it; with
/// one, every frame `0..frame_count` is. The tracked box carries over from
/// the last frame with a detection.
pub fn segment_sequence(
    dir: &Path,
    frame_count: usize,
    background: Option<&GrayFrame>,
    config: &SegmentationConfig,
    mut visit: impl FnMut(usize, FrameStages) -> Result<()>,
) -> Result<()> {
    let first = usize::from(background.is_none());
    if frame_count <= first {
        return Err(Error::Dataset(format!(
            "{} needs a background frame and at least one walking frame",
            dir.display()
        )));
    }
    let own;
    let background = match background {
        Some(b) => b,
        None => {
            own = read_gray(&dir.join(frame_file_name(0)))?;
            &own
        }
    };
    let mut previous: Option<BoundingBox> = None;
    for k in first..frame_count {
        let frame = read_gray(&dir.join(frame_file_name(k)))?;
        let stages = segment_frame(&frame, background, previous.as_ref(), config)?;
        if stages.bbox.is_some() {
            previous = stages.bbox;
        }
        visit(k, stages)?;
    }
    Ok(())
}

/// Silhouettes (or their skeletons) for one sequence. Frames without a
/// detected walker are dropped.
pub fn preprocess_sequence(
    dir: &Path,
    record: &ManifestRecord,
    background: Option<&GrayFrame>,
    mode: InputMode,
    config: &SegmentationConfig,
) -> Result<ProcessedSequence> {
    let mut frames = Vec::with_capacity(record.frame_count);
    let mut kept = Vec::with_capacity(record.frame_count);
    let mut skipped = 0;
    segment_sequence(dir, record.frame_count, background, config, |k, stages| {
        match stages.silhouette {
            Some(sil) => {
                frames.push(mode.apply(sil.mask()));
                kept.push(k);
            }
            None => {
                log::debug!("{}: no object in frame {k}; discarded", dir.display());
                skipped += 1;
            }
        }
        Ok(())
    })?;
    if skipped > 0 {
        log::info!("{}: discarded {skipped} frame(s) without a detection", dir.display());
    }
    Ok(ProcessedSequence {
        record: record.clone(),
        frames: Arc::new(frames),
        kept,
        skipped,
    })
}

/// Every sequence of the manifest, in manifest order.
pub fn preprocess_manifest(
    manifest: &Manifest,
    mode: InputMode,
    config: &SegmentationConfig,
) -> Result<Vec<ProcessedSequence>> {
    manifest
        .records
        .par_iter()
        .map(|r| preprocess_sequence(&manifest.resolve(r), r, None, mode, config))
        .collect()
}

/// Re-expresses silhouette sequences in another mode without re-reading
/// the frames.
pub fn convert_sequences(sequences: &[ProcessedSequence], mode: InputMode) -> Vec<ProcessedSequence> {
    sequences
        .par_iter()
        .map(|s| ProcessedSequence {
            frames: Arc::new(s.frames.iter().map(|f| mode.apply(f)).collect()),
            ..s.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::manifest::Status;
    use crate::segmentation::write_pgm;

    #[test]
    fn mode_names() {
        for m in [InputMode::Silhouette, InputMode::Skeleton, InputMode::Medial] {
            assert_eq!(m.to_string().parse::<InputMode>().unwrap(), m);
        }
        assert!("outline".parse::<InputMode>().is_err());
    }

    #[test]
    fn blank_frames_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let bg = GrayFrame::filled(40, 40, 50).unwrap();
        let mut walker = bg.clone();
        for y in 5..35 {
            for x in 15..25 {
                walker.set(x, y, 200);
            }
        }
        for (k, f) in [&bg, &walker, &bg, &walker].iter().enumerate() {
            write_pgm(&dir.path().join(frame_file_name(k)), f).unwrap();
        }
        let record = ManifestRecord {
            sequence_dir: "x".into(),
            subject_id: 1,
            status: Status::Nm,
            angle: 90,
            frame_count: 4,
        };
        let config = SegmentationConfig { out_h: 16, out_w: 16, ..Default::default() };
        let seq = preprocess_sequence(dir.path(), &record, None, InputMode::Silhouette, &config).unwrap();
        assert_eq!(seq.kept, vec![1, 3]);
        assert_eq!(seq.skipped, 1);
        assert_eq!(seq.frames[0].width(), 16);

        let skel = convert_sequences(std::slice::from_ref(&seq), InputMode::Skeleton);
        assert!(skel[0].frames[0].is_subset_of(&seq.frames[0]));
        assert!(skel[0].frames[0].count() < seq.frames[0].count());

        // An explicit background makes frame 0 a walking frame too.
        let all = preprocess_sequence(dir.path(), &record, Some(&bg), InputMode::Silhouette, &config).unwrap();
        assert_eq!(all.kept, vec![1, 3]);
        assert_eq!(all.skipped, 2);

        let missing = ManifestRecord { frame_count: 6, ..record };
        assert!(preprocess_sequence(dir.path(), &missing, None, InputMode::Silhouette, &config).is_err());
    }
}
