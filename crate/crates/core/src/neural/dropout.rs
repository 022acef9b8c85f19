use rand::RngCore;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout.
///
/// In eval mode, or with `rate == 0`, the input passes through and no mask
/// is drawn. In train mode every value is zeroed with probability `rate`
/// and survivors are scaled by `1 / (1 - rate)`. The returned mask holds
/// the per-element factor (0 or the scale) for the backward pass.
pub fn dropout(
    input: &[f64],
    rate: f64,
    mode: Mode,
    rng: &mut dyn RngCore,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Parameter(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((input.to_vec(), None));
    }
    let scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = input
        .iter()
        .map(|_| if unit(rng) < rate { 0.0 } else { scale })
        .collect();
    let out = input.iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((out, Some(mask)))
}

pub fn dropout_backward(grad_out: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
    match mask {
        Some(m) => grad_out.iter().zip(m).map(|(g, m)| g * m).collect(),
        None => grad_out.to_vec(),
    }
}

// Uniform in [0, 1) from the top 53 bits.
fn unit(rng: &mut dyn RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
