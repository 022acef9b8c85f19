//! 3D max pooling over (time, rows, cols), per channel.

use super::tensor::Tensor4;
use crate::error::{Error, Result};

/// Output dims with floor semantics; leftover voxels are dropped.
pub fn pool_output_dims(
    dims: [usize; 4],
    window: [usize; 3],
    stride: [usize; 3],
) -> Result<[usize; 4]> {
    if window.contains(&0) || stride.contains(&0) {
        return Err(Error::Shape(format!(
            "pool window {window:?} and stride {stride:?} must be positive"
        )));
    }
    let [c, t, h, w] = dims;
    let spatial = [t, h, w];
    if (0..3).any(|i| window[i] > spatial[i]) {
        return Err(Error::Shape(format!(
            "pool window {window:?} larger than input {spatial:?}"
        )));
    }
    let out = |i: usize| (spatial[i] - window[i]) / stride[i] + 1;
    Ok([c, out(0), out(1), out(2)])
}

/// Max over each window. `argmax[i]` is the flat input index that produced
/// output voxel `i`; ties go to the lowest index.
pub fn maxpool3d_forward(
    input: &Tensor4,
    window: [usize; 3],
    stride: [usize; 3],
) -> Result<(Tensor4, Vec<usize>)> {
    let out_dims = pool_output_dims(input.dims(), window, stride)?;
    let [c, ot, oh, ow] = out_dims;
    let data = input.data();
    let n = c * ot * oh * ow;
    let mut out = Vec::with_capacity(n);
    let mut argmax = Vec::with_capacity(n);

    for ch in 0..c {
        for z in 0..ot {
            for x in 0..oh {
                for y in 0..ow {
                    let (t0, h0, w0) = (z * stride[0], x * stride[1], y * stride[2]);
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = usize::MAX;
                    // Row-major traversal visits indices in increasing order,
                    // so a strict comparison keeps the lowest index on ties.
                    for dt in 0..window[0] {
                        for dh in 0..window[1] {
                            let base = input.index(ch, t0 + dt, h0 + dh, w0);
                            for (dw, &v) in data[base..base + window[2]].iter().enumerate() {
                                if v > best || best_i == usize::MAX {
                                    best = v;
                                    best_i = base + dw;
                                }
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_i);
                }
            }
        }
    }
    Ok((Tensor4::from_parts_unchecked(out_dims, out), argmax))
}

/// Routes each output gradient to its recorded argmax. Positions hit by
/// several windows accumulate.
pub fn maxpool3d_backward(
    grad_out: &Tensor4,
    argmax: &[usize],
    input_dims: [usize; 4],
) -> Result<Tensor4> {
    if grad_out.len() != argmax.len() {
        return Err(Error::Shape(format!(
            "pool backward: {} gradients for {} argmax entries",
            grad_out.len(),
            argmax.len()
        )));
    }
    let mut grad = Tensor4::zeros(input_dims);
    let gi = grad.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        let slot = gi.get_mut(i).ok_or_else(|| {
            Error::Shape(format!("argmax {i} outside input {input_dims:?}"))
        })?;
        *slot += g;
    }
    Ok(grad)
}
