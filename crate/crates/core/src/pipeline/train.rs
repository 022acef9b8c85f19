//! Mini-batch SGD training, evaluation and single-clip prediction.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::clips::Clip;
use super::preprocess::InputMode;
use crate::error::{Error, Result};
use crate::neural::{
    argmax, backward, forward, init_params, softmax_cross_entropy, Mode, ModelParams, ModelSpec, Tensor4,
};
use crate::seed::{derive, rng, stream};

pub const DEFAULT_CLIP_LEN: usize = 16;
pub const DEFAULT_STRIDE: usize = 4;
pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;
pub const DEFAULT_BATCH_SIZE: usize = 8;
pub const DEFAULT_SPLIT_RATIO: f64 = 0.8;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub clip_len: usize,
    pub stride: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub input_mode: InputMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            clip_len: DEFAULT_CLIP_LEN,
            stride: DEFAULT_STRIDE,
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: DEFAULT_BATCH_SIZE,
            split_ratio: DEFAULT_SPLIT_RATIO,
            seed: DEFAULT_SEED,
            input_mode: InputMode::Silhouette,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.clip_len < 2 {
            return bad(format!("clip_len must be at least 2, got {}", self.clip_len));
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio must be in (0, 1), got {}", self.split_ratio));
        }
        Ok(())
    }
}

/// Eval-mode metrics over a set of clips.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    /// Mean cross-entropy.
    pub loss: f64,
    /// Fraction of clips whose argmax class is the true subject.
    pub accuracy: f64,
    /// Mean absolute difference between probabilities and one-hot targets.
    pub mae: f64,
    pub clips: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub train_mae: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// One row per epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<EpochMetrics>,
}

pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,train_mae,val_loss,val_acc";

impl MetricsLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(
                s,
                "{},{:.10},{:.10},{:.10},{:.10},{:.10}",
                r.epoch, r.train_loss, r.train_acc, r.train_mae, r.val_loss, r.val_acc
            )
            .expect("writing to a String");
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn last(&self) -> Option<&EpochMetrics> {
        self.rows.last()
    }
}

struct SampleResult {
    loss: f64,
    probs: Vec<f64>,
    grads: ModelParams,
}

fn check_clips(spec: &ModelSpec, clips: &[Clip], what: &str) -> Result<usize> {
    let classes = spec.classes()?;
    if clips.is_empty() {
        return Err(Error::Parameter(format!("{what} set has no clips")));
    }
    for c in clips {
        if c.label >= classes {
            return Err(Error::Shape(format!(
                "{}: subject {} exceeds the model's {classes} classes",
                c.sequence_dir.display(),
                c.subject_id()
            )));
        }
        let [_, t, h, w] = spec.input;
        let f = &c.frames()[0];
        if spec.input[0] != 1 || c.len() != t || f.height() != h || f.width() != w {
            return Err(Error::Shape(format!(
                "{}: clip is 1x{}x{}x{}, model expects {:?}",
                c.sequence_dir.display(),
                c.len(),
                f.height(),
                f.width(),
                spec.input
            )));
        }
    }
    Ok(classes)
}

fn one_hot_abs_error(probs: &[f64], label: usize) -> f64 {
    probs
        .iter()
        .enumerate()
        .map(|(k, p)| (p - if k == label { 1.0 } else { 0.0 }).abs())
        .sum::<f64>()
        / probs.len() as f64
}

/// Trains from Glorot initialization. Each epoch shuffles the training
/// clips, applies one SGD step per mini-batch on the batch-mean gradient,
/// then evaluates on `test`. Per-clip gradients are computed in parallel
/// and summed in clip order, so results do not depend on thread count.
pub fn train(
    spec: &ModelSpec,
    train_clips: &[Clip],
    test_clips: &[Clip],
    config: &TrainConfig,
) -> Result<(ModelParams, MetricsLog)> {
    config.validate()?;
    check_clips(spec, train_clips, "training")?;
    check_clips(spec, test_clips, "test")?;

    let mut params = init_params(spec, derive(config.seed, &[stream::INIT]))?;
    let mut log = MetricsLog::default();
    let mut order: Vec<usize> = (0..train_clips.len()).collect();

    for epoch in 1..=config.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng(config.seed, &[stream::SHUFFLE, epoch as u64]));
        let (mut loss_sum, mut correct, mut mae_sum) = (0.0, 0usize, 0.0);

        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let results: Vec<SampleResult> = batch
                .par_iter()
                .enumerate()
                .map(|(i, &idx)| {
                    let clip = &train_clips[idx];
                    let position = (b * config.batch_size + i) as u64;
                    let mut drop_rng = rng(config.seed, &[stream::DROPOUT, epoch as u64, position]);
                    let (logits, trace) =
                        forward(spec, &params, &clip.to_tensor(), Mode::Train, &mut drop_rng, true)?;
                    let sce = softmax_cross_entropy(&logits, clip.label)?;
                    let grads = backward(spec, &params, &trace.expect("trace requested"), &sce.grad_logits)?;
                    Ok(SampleResult { loss: sce.loss, probs: sce.probs, grads })
                })
                .collect::<Result<_>>()?;

            let mut total = ModelParams::zeros(spec)?;
            let mut batch_loss = 0.0;
            for (r, &idx) in results.iter().zip(batch) {
                let label = train_clips[idx].label;
                batch_loss += r.loss;
                loss_sum += r.loss;
                correct += usize::from(argmax(&r.probs) == label);
                mae_sum += one_hot_abs_error(&r.probs, label);
                total.add_scaled(&r.grads, 1.0)?;
            }
            let mean_loss = batch_loss / batch.len() as f64;
            if !mean_loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b + 1, loss: mean_loss });
            }
            params.add_scaled(&total, -config.learning_rate / batch.len() as f64)?;
            if !params.all_finite() {
                return Err(Error::Diverged { epoch, batch: b + 1, loss: mean_loss });
            }
        }

        let n = train_clips.len() as f64;
        let val = evaluate(&params, spec, test_clips)?;
        let row = EpochMetrics {
            epoch,
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            train_mae: mae_sum / n,
            val_loss: val.loss,
            val_acc: val.accuracy,
        };
        log::info!(
            "{} epoch {epoch}/{}: loss {:.4} acc {:.3} | val loss {:.4} acc {:.3}",
            config.input_mode,
            config.epochs,
            row.train_loss,
            row.train_acc,
            row.val_loss,
            row.val_acc
        );
        log.rows.push(row);
    }
    Ok((params, log))
}

/// Eval-mode (dropout off) loss, accuracy and MAE.
pub fn evaluate(params: &ModelParams, spec: &ModelSpec, clips: &[Clip]) -> Result<Metrics> {
    check_clips(spec, clips, "evaluation")?;
    let per_clip: Vec<(f64, Vec<f64>)> = clips
        .par_iter()
        .map(|c| {
            let mut unused = rng(0, &[]);
            let (logits, _) = forward(spec, params, &c.to_tensor(), Mode::Eval, &mut unused, false)?;
            let sce = softmax_cross_entropy(&logits, c.label)?;
            Ok((sce.loss, sce.probs))
        })
        .collect::<Result<_>>()?;
    let n = clips.len() as f64;
    let (mut loss, mut correct, mut mae) = (0.0, 0usize, 0.0);
    for ((l, probs), c) in per_clip.iter().zip(clips) {
        loss += l;
        correct += usize::from(argmax(probs) == c.label);
        mae += one_hot_abs_error(probs, c.label);
    }
    Ok(Metrics {
        loss: loss / n,
        accuracy: correct as f64 / n,
        mae: mae / n,
        clips: clips.len(),
    })
}

/// Most likely subject id (1-based, ties to the lowest) and the full
/// probability vector.
pub fn predict(params: &ModelParams, spec: &ModelSpec, clip: &Tensor4) -> Result<(u32, Vec<f64>)> {
    let probs = crate::neural::predict_probs(spec, params, clip)?;
    Ok((argmax(&probs) as u32 + 1, probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::BinaryMask;
    use std::sync::Arc;

    fn tiny_spec(classes: usize) -> ModelSpec {
        format!("input 1 4 8 8\nconv3d 4 3 3 3\nmaxpool3d 2 2 2\nflatten\ndense 16\ntanh\ndense {classes}\nsoftmax\n")
            .parse()
            .unwrap()
    }

    /// Sequences whose frames carry a subject-specific bar pattern.
    fn clips(subjects: usize, per_subject: usize) -> Vec<Clip> {
        let mut out = Vec::new();
        for s in 0..subjects {
            for v in 0..per_subject {
                let frames: Vec<BinaryMask> = (0..4)
                    .map(|t| {
                        let mut m = BinaryMask::new(8, 8);
                        for y in 0..8 {
                            m.set((s * 3 + t + v) % 8, y, true);
                            m.set((s * 5 + y) % 8, (t + v) % 8, true);
                        }
                        m
                    })
                    .collect();
                out.push(Clip::new(Arc::new(frames), 0, 4, s, format!("{s}/{v}").into()).unwrap());
            }
        }
        out
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { clip_len: 1, ..Default::default() },
            TrainConfig { split_ratio: 1.0, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn constant_label_loss_vanishes() {
        let data: Vec<Clip> = clips(1, 6);
        let config = TrainConfig { epochs: 5, clip_len: 4, learning_rate: 0.5, ..Default::default() };
        let (_, log) = train(&tiny_spec(2), &data, &data, &config).unwrap();
        assert_eq!(log.rows.len(), 5);
        assert!(log.last().unwrap().val_loss < 0.05, "{:?}", log.last());
        assert_eq!(log.last().unwrap().val_acc, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = clips(3, 4);
        let config = TrainConfig { epochs: 3, clip_len: 4, batch_size: 3, ..Default::default() };
        let (p1, l1) = train(&tiny_spec(3), &data, &data, &config).unwrap();
        let (p2, l2) = train(&tiny_spec(3), &data, &data, &config).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(l1.to_csv(), l2.to_csv());
    }

    #[test]
    fn divergence_is_reported() {
        let data = clips(3, 4);
        let config = TrainConfig { epochs: 3, clip_len: 4, batch_size: 1, learning_rate: f64::MAX, ..Default::default() };
        let result = train(&tiny_spec(3), &data, &data, &config);
        assert!(matches!(result, Err(Error::Diverged { epoch: 1, .. })), "{result:?}");
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let data = clips(3, 2);
        let config = TrainConfig { epochs: 1, clip_len: 4, ..Default::default() };
        assert!(train(&tiny_spec(2), &data, &data, &config).is_err());
        assert!(train(&tiny_spec(3), &data, &[], &config).is_err());
        assert!(evaluate(&init_params(&tiny_spec(3), 0).unwrap(), &tiny_spec(3), &[]).is_err());
    }

    #[test]
    fn evaluation_is_repeatable_and_csv_has_header() {
        let data = clips(3, 2);
        let spec = tiny_spec(3);
        let params = init_params(&spec, 1).unwrap();
        let a = evaluate(&params, &spec, &data).unwrap();
        assert_eq!(a, evaluate(&params, &spec, &data).unwrap());
        let (id, probs) = predict(&params, &spec, &data[0].to_tensor()).unwrap();
        assert!((1..=3).contains(&id));
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(MetricsLog::default().to_csv().starts_with(METRICS_HEADER));
    }
}
