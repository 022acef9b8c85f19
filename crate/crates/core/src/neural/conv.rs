//! Valid 3D convolution with a tanh activation.
//!
//! For output channel `j`, frame `z`, row `x`, column `y`:
//!
//! ```text
//! out[j,z,x,y] = tanh(b[j] + sum_m sum_p sum_q sum_r w[j,m,p,q,r] * in[m, z+r, x+p, y+q])
//! ```
//!
//! `p`/`q` run over the kernel's rows/columns and `r` over its temporal
//! extent. Stride 1, no padding.

use super::tensor::Tensor4;
use crate::error::{Error, Result};

/// Kernel extent along time, rows and columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KernelDims {
    pub time: usize,
    pub rows: usize,
    pub cols: usize,
}

impl KernelDims {
    pub fn new(time: usize, rows: usize, cols: usize) -> Self {
        Self { time, rows, cols }
    }

    pub fn volume(&self) -> usize {
        self.time * self.rows * self.cols
    }
}

/// Weights are stored `[out][in][row][col][time]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv3dLayer {
    in_channels: usize,
    out_channels: usize,
    kernel: KernelDims,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Conv3dLayer {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: KernelDims,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel.volume() == 0 {
            return Err(Error::Shape(format!(
                "conv3d needs non-zero channels and kernel, got {in_channels}->{out_channels} {kernel:?}"
            )));
        }
        let expect = out_channels * in_channels * kernel.volume();
        if weights.len() != expect || bias.len() != out_channels {
            return Err(Error::Shape(format!(
                "conv3d {in_channels}->{out_channels} {kernel:?} needs {expect} weights and {out_channels} biases, got {} and {}",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            weights,
            bias,
        })
    }

    pub fn zeros(in_channels: usize, out_channels: usize, kernel: KernelDims) -> Result<Self> {
        Self::new(
            in_channels,
            out_channels,
            kernel,
            vec![0.0; out_channels * in_channels * kernel.volume()],
            vec![0.0; out_channels],
        )
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> KernelDims {
        self.kernel
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Weights and bias borrowed mutably together.
    pub fn buffers_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    #[inline]
    pub fn weight_index(&self, j: usize, m: usize, p: usize, q: usize, r: usize) -> usize {
        let k = self.kernel;
        (((j * self.in_channels + m) * k.rows + p) * k.cols + q) * k.time + r
    }

    /// Output dims for an input of `dims`, or a shape error.
    pub fn output_dims(&self, dims: [usize; 4]) -> Result<[usize; 4]> {
        let [c, t, h, w] = dims;
        let k = self.kernel;
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "conv3d expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        if k.time > t || k.rows > h || k.cols > w {
            return Err(Error::Shape(format!(
                "kernel {}x{}x{} (t x h x w) does not fit input {t}x{h}x{w}",
                k.time, k.rows, k.cols
            )));
        }
        Ok([
            self.out_channels,
            t - k.time + 1,
            h - k.rows + 1,
            w - k.cols + 1,
        ])
    }
}

/// Gradients of a conv layer's loss with respect to its input and parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv3dGradients {
    pub input: Tensor4,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (d, s) in y.iter_mut().zip(x) {
        *d += alpha * s;
    }
}

// One flag per input row: whether it holds any non-zero value. Binary
// frames are mostly empty rows, which lets the kernels skip them.
fn nonzero_rows(input: &Tensor4) -> Vec<bool> {
    input
        .data()
        .chunks(input.cols())
        .map(|row| row.iter().any(|&v| v != 0.0))
        .collect()
}

/// Affine part of the layer, before tanh.
pub fn conv3d_preactivation(input: &Tensor4, layer: &Conv3dLayer) -> Result<Tensor4> {
    let out_dims = layer.output_dims(input.dims())?;
    let [c, t, h, w] = input.dims();
    let [oc, ot, oh, ow] = out_dims;
    let k = layer.kernel;
    let x = input.data();
    let live = nonzero_rows(input);
    let fused = k.rows == 3 && k.cols == 3;
    let mut out = vec![0.0; oc * ot * oh * ow];
    let mut taps = [0.0; 9];

    for j in 0..oc {
        for z in 0..ot {
            for xr in 0..oh {
                let o0 = ((j * ot + z) * oh + xr) * ow;
                let acc = &mut out[o0..o0 + ow];
                acc.fill(layer.bias[j]);
                for m in 0..c {
                    for r in 0..k.time {
                        let base = (m * t + z + r) * h + xr;
                        if (0..k.rows).all(|p| !live[base + p]) {
                            continue;
                        }
                        if fused {
                            for p in 0..3 {
                                for q in 0..3 {
                                    taps[p * 3 + q] = layer.weights[layer.weight_index(j, m, p, q, r)];
                                }
                            }
                            let row = |p: usize| &x[(base + p) * w..(base + p + 1) * w];
                            fused_rows3x3(&taps, row(0), row(1), row(2), acc);
                            continue;
                        }
                        for p in 0..k.rows {
                            if !live[base + p] {
                                continue;
                            }
                            let row = &x[(base + p) * w..(base + p + 1) * w];
                            for q in 0..k.cols {
                                let wv = layer.weights[layer.weight_index(j, m, p, q, r)];
                                axpy(wv, &row[q..q + ow], acc);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor4::from_parts_unchecked(out_dims, out))
}

// acc[i] += sum over p, q of taps[3p + q] * rows[p][i + q].
#[inline]
fn fused_rows3x3(taps: &[f64; 9], a: &[f64], b: &[f64], c: &[f64], acc: &mut [f64]) {
    let n = acc.len();
    let (a, b, c) = (&a[..n + 2], &b[..n + 2], &c[..n + 2]);
    for i in 0..n {
        let sa = taps[0] * a[i] + taps[1] * a[i + 1] + taps[2] * a[i + 2];
        let sb = taps[3] * b[i] + taps[4] * b[i + 1] + taps[5] * b[i + 2];
        let sc = taps[6] * c[i] + taps[7] * c[i + 1] + taps[8] * c[i + 2];
        acc[i] += sa + sb + sc;
    }
}

// The three dot products of `g` against `row` shifted by 0, 1 and 2.
#[inline]
fn dot3_shifted(g: &[f64], row: &[f64]) -> [f64; 3] {
    let n = g.len();
    let row = &row[..n + 2];
    let mut acc = [[0.0f64; 4]; 3];
    let chunks = n / 4;
    for ch in 0..chunks {
        let i = ch * 4;
        for q in 0..3 {
            for l in 0..4 {
                acc[q][l] += g[i + l] * row[i + l + q];
            }
        }
    }
    let mut out = [0.0; 3];
    for q in 0..3 {
        let mut s = (acc[q][0] + acc[q][1]) + (acc[q][2] + acc[q][3]);
        for i in chunks * 4..n {
            s += g[i] * row[i + q];
        }
        out[q] = s;
    }
    out
}

// dst[x] += sum over q of taps[q] * g[x - q], with g zero outside its
// range. `padded` holds g with two zeros on each side.
#[inline]
fn scatter3(taps: [f64; 3], padded: &[f64], dst: &mut [f64]) {
    let n = dst.len();
    let padded = &padded[..n + 2];
    for x in 0..n {
        dst[x] += taps[0] * padded[x + 2] + taps[1] * padded[x + 1] + taps[2] * padded[x];
    }
}

/// Forward pass: `tanh` of [`conv3d_preactivation`].
pub fn conv3d_forward(input: &Tensor4, layer: &Conv3dLayer) -> Result<Tensor4> {
    let mut out = conv3d_preactivation(input, layer)?;
    for v in out.data_mut() {
        *v = v.tanh();
    }
    Ok(out)
}

/// Backward pass given the forward input and pre-activation.
pub fn conv3d_backward(
    grad_out: &Tensor4,
    saved_input: &Tensor4,
    saved_preactivation: &Tensor4,
    layer: &Conv3dLayer,
) -> Result<Conv3dGradients> {
    let output = Tensor4::from_parts_unchecked(
        saved_preactivation.dims(),
        saved_preactivation.data().iter().map(|v| v.tanh()).collect(),
    );
    let (input, weights, bias) =
        conv3d_backward_from_output(grad_out, saved_input, &output, layer, true)?;
    Ok(Conv3dGradients {
        input: input.expect("requested"),
        weights,
        bias,
    })
}

/// Backward pass using the post-tanh output (`1 - out^2` is the tanh
/// derivative). The input gradient is only computed when `want_input`.
#[allow(clippy::needless_range_loop)]
pub(crate) fn conv3d_backward_from_output(
    grad_out: &Tensor4,
    saved_input: &Tensor4,
    saved_output: &Tensor4,
    layer: &Conv3dLayer,
    want_input: bool,
) -> Result<(Option<Tensor4>, Vec<f64>, Vec<f64>)> {
    let out_dims = layer.output_dims(saved_input.dims())?;
    if grad_out.dims() != out_dims || saved_output.dims() != out_dims {
        return Err(Error::Shape(format!(
            "conv3d backward: expected gradient {out_dims:?}, got {:?} (saved output {:?})",
            grad_out.dims(),
            saved_output.dims()
        )));
    }
    let [c, t, h, w] = saved_input.dims();
    let [oc, ot, oh, ow] = out_dims;
    let k = layer.kernel;
    let x = saved_input.data();
    let live = nonzero_rows(saved_input);

    let gpre: Vec<f64> = grad_out
        .data()
        .iter()
        .zip(saved_output.data())
        .map(|(g, o)| g * (1.0 - o * o))
        .collect();

    let mut gw = vec![0.0; layer.weights.len()];
    let mut gb = vec![0.0; oc];
    let mut gin = if want_input {
        vec![0.0; saved_input.len()]
    } else {
        Vec::new()
    };

    let fused = k.cols == 3;
    let mut padded = vec![0.0; ow + 4];

    for j in 0..oc {
        for z in 0..ot {
            for xr in 0..oh {
                let o0 = ((j * ot + z) * oh + xr) * ow;
                let g = &gpre[o0..o0 + ow];
                if g.iter().all(|&v| v == 0.0) {
                    continue;
                }
                gb[j] += g.iter().sum::<f64>();
                if fused && want_input {
                    padded[2..ow + 2].copy_from_slice(g);
                }
                for m in 0..c {
                    for r in 0..k.time {
                        for p in 0..k.rows {
                            let row_id = (m * t + z + r) * h + xr + p;
                            let span = row_id * w..(row_id + 1) * w;
                            let wi = |q: usize| layer.weight_index(j, m, p, q, r);
                            if live[row_id] {
                                let row = &x[span.clone()];
                                if fused {
                                    let d = dot3_shifted(g, row);
                                    for q in 0..3 {
                                        gw[wi(q)] += d[q];
                                    }
                                } else {
                                    for q in 0..k.cols {
                                        gw[wi(q)] += dot(g, &row[q..q + ow]);
                                    }
                                }
                            }
                            if want_input {
                                let dst = &mut gin[span];
                                if fused {
                                    let taps = [0, 1, 2].map(|q| layer.weights[wi(q)]);
                                    scatter3(taps, &padded, dst);
                                } else {
                                    for q in 0..k.cols {
                                        axpy(layer.weights[wi(q)], g, &mut dst[q..q + ow]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let gin = want_input.then(|| Tensor4::from_parts_unchecked([c, t, h, w], gin));
    Ok((gin, gw, gb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Direct six-loop summation, written independently of the row kernels.
    fn oracle(input: &Tensor4, layer: &Conv3dLayer) -> Tensor4 {
        let [c, t, h, w] = input.dims();
        let k = layer.kernel();
        let (ot, oh, ow) = (t - k.time + 1, h - k.rows + 1, w - k.cols + 1);
        let mut out = Tensor4::zeros([layer.out_channels(), ot, oh, ow]);
        for j in 0..layer.out_channels() {
            for z in 0..ot {
                for x in 0..oh {
                    for y in 0..ow {
                        let mut s = layer.bias()[j];
                        for m in 0..c {
                            for p in 0..k.rows {
                                for q in 0..k.cols {
                                    for r in 0..k.time {
                                        s += layer.weights()[layer.weight_index(j, m, p, q, r)]
                                            * input.get(m, z + r, x + p, y + q);
                                    }
                                }
                            }
                        }
                        out.set(j, z, x, y, s.tanh());
                    }
                }
            }
        }
        out
    }

    fn random_layer(rng: &mut ChaCha8Rng, c: usize, oc: usize, k: KernelDims) -> Conv3dLayer {
        let n = oc * c * k.volume();
        Conv3dLayer::new(
            c,
            oc,
            k,
            (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            (0..oc).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        )
        .unwrap()
    }

    fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4 {
        let n = dims.iter().product();
        Tensor4::new(dims, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn single_voxel_is_tanh() {
        let layer = Conv3dLayer::new(1, 1, KernelDims::new(1, 1, 1), vec![1.0], vec![0.0]).unwrap();
        let v = 0.37;
        let out = conv3d_forward(&Tensor4::new([1, 1, 1, 1], vec![v]).unwrap(), &layer).unwrap();
        assert_eq!(out.data(), &[v.tanh()]);
    }

    #[test]
    fn zero_weights_give_tanh_bias() {
        let mut layer = Conv3dLayer::zeros(2, 3, KernelDims::new(2, 2, 2)).unwrap();
        layer.bias_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = conv3d_forward(&random_tensor(&mut rng, [2, 3, 4, 4]), &layer).unwrap();
        assert_eq!(out.dims(), [3, 2, 3, 3]);
        for j in 0..3 {
            for z in 0..2 {
                for x in 0..3 {
                    for y in 0..3 {
                        assert_eq!(out.get(j, z, x, y), layer.bias()[j].tanh());
                    }
                }
            }
        }
    }

    #[test]
    fn matches_oracle_seed7() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = random_tensor(&mut rng, [2, 4, 5, 5]);
        // kernel 3x2x3x3: three output channels, 2 frames, 3x3 spatial
        let layer = random_layer(&mut rng, 2, 3, KernelDims::new(2, 3, 3));
        let got = conv3d_forward(&input, &layer).unwrap();
        let want = oracle(&input, &layer);
        assert_eq!(got.dims(), want.dims());
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn random_instances_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for i in 0..100 {
            let k = KernelDims::new(rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=3));
            let dims = [
                rng.gen_range(1..=2),
                rng.gen_range(k.time..=6),
                rng.gen_range(k.rows..=8),
                rng.gen_range(k.cols..=8),
            ];
            let mut input = random_tensor(&mut rng, dims);
            if i % 2 == 0 {
                for v in input.data_mut() {
                    *v = if *v > 0.3 { 1.0 } else { 0.0 };
                }
            }
            let oc = rng.gen_range(1..=3);
            let layer = random_layer(&mut rng, dims[0], oc, k);
            let got = conv3d_forward(&input, &layer).unwrap();
            let want = oracle(&input, &layer);
            assert_eq!(got.dims(), want.dims());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() <= 1e-12, "instance {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn skips_zero_rows_correctly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut input = Tensor4::zeros([1, 4, 6, 6]);
        for i in 0..input.len() {
            if rng.gen_bool(0.1) {
                input.data_mut()[i] = 1.0;
            }
        }
        let layer = random_layer(&mut rng, 1, 2, KernelDims::new(3, 3, 3));
        let got = conv3d_forward(&input, &layer).unwrap();
        let want = oracle(&input, &layer);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn geometry_errors() {
        let layer = Conv3dLayer::zeros(1, 1, KernelDims::new(3, 3, 3)).unwrap();
        assert!(matches!(
            conv3d_forward(&Tensor4::zeros([1, 2, 5, 5]), &layer),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            conv3d_forward(&Tensor4::zeros([2, 3, 5, 5]), &layer),
            Err(Error::Shape(_))
        ));
        assert!(Conv3dLayer::new(1, 1, KernelDims::new(1, 1, 1), vec![], vec![0.0]).is_err());
    }

    #[test]
    fn zero_upstream_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let input = random_tensor(&mut rng, [2, 3, 4, 4]);
        let layer = random_layer(&mut rng, 2, 2, KernelDims::new(2, 2, 2));
        let pre = conv3d_preactivation(&input, &layer).unwrap();
        let g = conv3d_backward(&Tensor4::zeros(pre.dims()), &input, &pre, &layer).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.weights.iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_voxel_bias_gradient() {
        let (w, b, v, up) = (0.8, 0.1, 0.5, 1.7);
        let layer = Conv3dLayer::new(1, 1, KernelDims::new(1, 1, 1), vec![w], vec![b]).unwrap();
        let input = Tensor4::new([1, 1, 1, 1], vec![v]).unwrap();
        let pre = conv3d_preactivation(&input, &layer).unwrap();
        let g = conv3d_backward(&Tensor4::new([1, 1, 1, 1], vec![up]).unwrap(), &input, &pre, &layer)
            .unwrap();
        let d = up * (1.0 - (b + w * v).tanh().powi(2));
        assert!((g.bias[0] - d).abs() < 1e-15);
        assert!((g.weights[0] - d * v).abs() < 1e-15);
        assert!((g.input.data()[0] - d * w).abs() < 1e-15);
    }

    #[test]
    fn backward_rejects_wrong_gradient_shape() {
        let layer = Conv3dLayer::zeros(1, 1, KernelDims::new(1, 1, 1)).unwrap();
        let input = Tensor4::zeros([1, 2, 2, 2]);
        let pre = conv3d_preactivation(&input, &layer).unwrap();
        assert!(conv3d_backward(&Tensor4::zeros([1, 1, 2, 2]), &input, &pre, &layer).is_err());
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (0..7).map(f64::from).collect();
        let b = vec![1.0; 7];
        assert_eq!(dot(&a, &b), 21.0);
    }
}
