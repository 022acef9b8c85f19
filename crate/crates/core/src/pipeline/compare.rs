//! Running the same experiment on silhouettes and on skeletons.

use std::fmt;

use super::clips::{build_clips, split_dataset, Clip, Split};
use super::manifest::Manifest;
use super::preprocess::{convert_sequences, preprocess_manifest, InputMode, ProcessedSequence};
use super::train::{evaluate, train, Metrics, MetricsLog, TrainConfig};
use crate::error::{Error, Result};
use crate::neural::{ModelParams, ModelSpec};
use crate::segmentation::SegmentationConfig;

/// Row names of the comparison table, in order.
pub const REPORT_ROWS: [&str; 5] = [
    "Accuracy",
    "Loss",
    "Value Accuracy",
    "Categorical Accuracy",
    "Mean Absolute Error",
];

/// Published CASIA-B figures (124 subjects, full-scale training), shown
/// for reference only: silhouette then skeleton, in `REPORT_ROWS` order.
/// Accuracies are percentages.
pub const REFERENCE_SILHOUETTE: [f64; 5] = [90.16, 0.2980, 79.84, 90.16, 0.0131];
pub const REFERENCE_SKELETON: [f64; 5] = [94.27, 1.856, 90.56, 94.27, 0.073];

/// The model spec for `classes` subjects: `custom` when given (checked
/// against the clip geometry), otherwise the default stack.
pub fn resolve_spec(
    custom: Option<&ModelSpec>,
    config: &TrainConfig,
    seg: &SegmentationConfig,
    classes: usize,
) -> Result<ModelSpec> {
    let input = [1, config.clip_len, seg.out_h, seg.out_w];
    let spec = match custom {
        Some(s) => s.clone(),
        None => ModelSpec::default_for(input, classes),
    };
    if spec.input != input {
        return Err(Error::Shape(format!(
            "model input {:?} does not match clips of {:?}",
            spec.input, input
        )));
    }
    let k = spec.classes()?;
    if k != classes {
        return Err(Error::Shape(format!("model has {k} outputs but the dataset has {classes} subjects")));
    }
    Ok(spec)
}

/// Clips from the selected sequences, in sequence order.
pub fn clips_for(sequences: &[ProcessedSequence], indices: &[usize], config: &TrainConfig) -> Result<Vec<Clip>> {
    let mut out = Vec::new();
    for &i in indices {
        let s = &sequences[i];
        out.extend(build_clips(
            &s.frames,
            config.clip_len,
            config.stride,
            s.record.subject_id as usize - 1,
            &s.record.sequence_dir,
        )?);
    }
    Ok(out)
}

/// Outcome of training and evaluating one input mode.
#[derive(Clone, Debug)]
pub struct ModeResult {
    pub mode: InputMode,
    pub spec: ModelSpec,
    pub params: ModelParams,
    pub log: MetricsLog,
    /// Final parameters on the training partition, dropout off.
    pub train: Metrics,
    /// Final parameters on the held-out partition.
    pub test: Metrics,
}

impl ModeResult {
    /// Values for `REPORT_ROWS`. Accuracy and categorical accuracy are the
    /// same quantity for single-label targets; value accuracy is held-out
    /// accuracy. Accuracies are percentages.
    pub fn report_values(&self) -> [f64; 5] {
        [
            100.0 * self.train.accuracy,
            self.train.loss,
            100.0 * self.test.accuracy,
            100.0 * self.train.accuracy,
            self.train.mae,
        ]
    }
}

/// Preprocessed sequences plus the partition shared by every mode.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub silhouettes: Vec<ProcessedSequence>,
    pub split: Split,
    pub subjects: usize,
}

impl Experiment {
    pub fn prepare(manifest: &Manifest, config: &TrainConfig, seg: &SegmentationConfig) -> Result<Self> {
        config.validate()?;
        manifest.validate()?;
        let split = split_dataset(manifest, config.split_ratio, config.seed)?;
        let silhouettes = preprocess_manifest(manifest, InputMode::Silhouette, seg)?;
        Ok(Self {
            silhouettes,
            split,
            subjects: manifest.subject_count(),
        })
    }

    pub fn sequences(&self, mode: InputMode) -> Vec<ProcessedSequence> {
        match mode {
            InputMode::Silhouette => self.silhouettes.clone(),
            other => convert_sequences(&self.silhouettes, other),
        }
    }

    /// Train and test clips for `mode`.
    pub fn clips(&self, mode: InputMode, config: &TrainConfig) -> Result<(Vec<Clip>, Vec<Clip>)> {
        let seqs = self.sequences(mode);
        Ok((
            clips_for(&seqs, &self.split.train, config)?,
            clips_for(&seqs, &self.split.test, config)?,
        ))
    }

    pub fn run(&self, spec: &ModelSpec, config: &TrainConfig) -> Result<ModeResult> {
        let mode = config.input_mode;
        let (train_clips, test_clips) = self.clips(mode, config)?;
        log::info!(
            "{mode}: {} training clips, {} test clips, {} subjects",
            train_clips.len(),
            test_clips.len(),
            self.subjects
        );
        let (params, log) = train(spec, &train_clips, &test_clips, config)?;
        Ok(ModeResult {
            mode,
            spec: spec.clone(),
            train: evaluate(&params, spec, &train_clips)?,
            test: evaluate(&params, spec, &test_clips)?,
            params,
            log,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub silhouette: ModeResult,
    pub skeleton: ModeResult,
    pub subjects: usize,
    pub epochs: usize,
}

/// Trains and evaluates both modes with identical seeds and settings.
pub fn compare_modes(
    manifest: &Manifest,
    custom_spec: Option<&ModelSpec>,
    config: &TrainConfig,
    seg: &SegmentationConfig,
) -> Result<ComparisonReport> {
    let experiment = Experiment::prepare(manifest, config, seg)?;
    let spec = resolve_spec(custom_spec, config, seg, experiment.subjects)?;
    let run = |mode| experiment.run(&spec, &TrainConfig { input_mode: mode, ..config.clone() });
    Ok(ComparisonReport {
        silhouette: run(InputMode::Silhouette)?,
        skeleton: run(InputMode::Skeleton)?,
        subjects: experiment.subjects,
        epochs: config.epochs,
    })
}

fn format_value(row: usize, v: f64) -> String {
    match row {
        0 | 2 | 3 => format!("{v:.2}%"),
        _ => format!("{v:.4}"),
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "Silhouette vs skeleton input ({} subjects, {} epochs)",
            self.subjects, self.epochs
        )?;
        writeln!(f)?;
        writeln!(f, "{:<22}{:>14}{:>14}", "Parameter", "Silhouette", "Skeleton")?;
        let (sil, skel) = (self.silhouette.report_values(), self.skeleton.report_values());
        for (i, name) in REPORT_ROWS.iter().enumerate() {
            writeln!(f, "{name:<22}{:>14}{:>14}", format_value(i, sil[i]), format_value(i, skel[i]))?;
        }
        writeln!(f)?;
        writeln!(
            f,
            "Clips: {} train / {} test per mode.",
            self.silhouette.train.clips, self.silhouette.test.clips
        )?;
        let ranking = match self.skeleton.test.accuracy.partial_cmp(&self.silhouette.test.accuracy) {
            Some(std::cmp::Ordering::Greater) => "skeleton above silhouette",
            Some(std::cmp::Ordering::Less) => "silhouette above skeleton",
            _ => "tie",
        };
        writeln!(f, "Held-out accuracy ranking: {ranking}.")?;
        writeln!(f)?;
        writeln!(f, "Reference values published for CASIA-B (124 subjects), not reproduced here:")?;
        writeln!(f, "{:<22}{:>14}{:>14}", "Parameter", "Silhouette", "Skeleton")?;
        for (i, name) in REPORT_ROWS.iter().enumerate() {
            writeln!(
                f,
                "{name:<22}{:>14}{:>14}",
                format_value(i, REFERENCE_SILHOUETTE[i]),
                format_value(i, REFERENCE_SKELETON[i])
            )?;
        }
        Ok(())
    }
}
