//! Softmax cross-entropy and the classification metrics.

use crate::error::{Error, Result};

/// Loss, class probabilities and the gradient with respect to the logits.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxCrossEntropy {
    pub loss: f64,
    pub probs: Vec<f64>,
    pub grad_logits: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<SoftmaxCrossEntropy> {
    if logits.len() < 2 {
        return Err(Error::Parameter(format!(
            "softmax needs at least 2 classes, got {}",
            logits.len()
        )));
    }
    if label >= logits.len() {
        return Err(Error::Parameter(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    // -ln p[label] = ln(sum exp(l - max)) - (l[label] - max), never negative.
    let loss = (sum.ln() - (logits[label] - max)).max(0.0);
    let probs: Vec<f64> = logits.iter().map(|l| (l - max).exp() / sum).collect();
    let mut grad_logits = probs.clone();
    grad_logits[label] -= 1.0;
    Ok(SoftmaxCrossEntropy {
        loss,
        probs,
        grad_logits,
    })
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_predictions(predictions: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::Parameter("no predictions".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Parameter(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    for (i, (p, &l)) in predictions.iter().zip(labels).enumerate() {
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "prediction {i} sums to {sum}, not 1"
            )));
        }
        if l >= p.len() {
            return Err(Error::Parameter(format!(
                "label {l} of sample {i} out of range for {} classes",
                p.len()
            )));
        }
    }
    Ok(())
}

/// Fraction of samples whose argmax equals the label.
pub fn categorical_accuracy(predictions: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_predictions(predictions, labels)?;
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, &l)| argmax(p) == l)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Mean of `|p_k - onehot_k|` over every sample and class.
pub fn mean_absolute_error(predictions: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    check_predictions(predictions, labels)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, &l) in predictions.iter().zip(labels) {
        for (k, &pk) in p.iter().enumerate() {
            let target = if k == l { 1.0 } else { 0.0 };
            total += (pk - target).abs();
        }
        count += p.len();
    }
    Ok(total / count as f64)
}
