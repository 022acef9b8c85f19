//! Layer stacks: description, parameters, initialization and the
//! whole-network forward/backward passes.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{conv3d_backward_from_output, conv3d_forward, Conv3dLayer, KernelDims};
use super::dense::{dense_backward, dense_forward, DenseLayer};
use super::dropout::{dropout, dropout_backward, Mode};
use super::pool::{maxpool3d_backward, maxpool3d_forward, pool_output_dims};
use super::tensor::Tensor4;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    /// `filters` output channels; tanh is part of the layer.
    Conv3d { filters: usize, kernel: KernelDims },
    MaxPool3d { window: [usize; 3], stride: [usize; 3] },
    Flatten,
    Dropout { rate: f64 },
    Dense { units: usize },
    Tanh,
    /// Marks the preceding dense layer's output as class logits.
    Softmax,
}

/// Activation shape between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Volume([usize; 4]),
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Volume(d) => d.iter().product(),
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Input geometry plus the ordered layer list.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub input: [usize; 4],
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// The default stack for `classes` identities and clips of `input` dims:
    /// conv 8@3x3x3, pool 2, conv 16@3x3x3, pool 2, flatten, dropout 0.3,
    /// dense 64 + tanh, dropout 0.3, dense `classes`, softmax.
    pub fn default_for(input: [usize; 4], classes: usize) -> Self {
        let k = KernelDims::new(3, 3, 3);
        Self {
            input,
            layers: vec![
                LayerSpec::Conv3d { filters: 8, kernel: k },
                LayerSpec::MaxPool3d { window: [2; 3], stride: [2; 3] },
                LayerSpec::Conv3d { filters: 16, kernel: k },
                LayerSpec::MaxPool3d { window: [2; 3], stride: [2; 3] },
                LayerSpec::Flatten,
                LayerSpec::Dropout { rate: 0.3 },
                LayerSpec::Dense { units: 64 },
                LayerSpec::Tanh,
                LayerSpec::Dropout { rate: 0.3 },
                LayerSpec::Dense { units: classes },
                LayerSpec::Softmax,
            ],
        }
    }

    /// Shape after every layer. Fails unless the stack composes and ends
    /// in `dense K` + `softmax` with K >= 2.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        if self.input.contains(&0) {
            return Err(Error::Shape(format!("input dims {:?} must be positive", self.input)));
        }
        let mut shape = Shape::Volume(self.input);
        let mut shapes = Vec::with_capacity(self.layers.len());
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            let err = |msg: String| Error::Shape(format!("layer {i} ({layer:?}): {msg}"));
            shape = match (layer, shape) {
                (LayerSpec::Conv3d { filters, kernel }, Shape::Volume(d)) => {
                    if *filters == 0 {
                        return Err(err("needs at least one filter".into()));
                    }
                    let probe = Conv3dLayer::zeros(d[0], *filters, *kernel).map_err(|e| err(e.to_string()))?;
                    Shape::Volume(probe.output_dims(d).map_err(|e| err(e.to_string()))?)
                }
                (LayerSpec::MaxPool3d { window, stride }, Shape::Volume(d)) => {
                    Shape::Volume(pool_output_dims(d, *window, *stride).map_err(|e| err(e.to_string()))?)
                }
                (LayerSpec::Flatten, Shape::Volume(d)) => Shape::Flat(d.iter().product()),
                (LayerSpec::Dropout { rate }, s) => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(err(format!("rate {rate} outside [0, 1)")));
                    }
                    s
                }
                (LayerSpec::Dense { units }, Shape::Flat(_)) => {
                    if *units == 0 {
                        return Err(err("needs at least one unit".into()));
                    }
                    Shape::Flat(*units)
                }
                (LayerSpec::Tanh, s) => s,
                (LayerSpec::Softmax, Shape::Flat(k)) => {
                    if i + 1 != n {
                        return Err(err("softmax must be the last layer".into()));
                    }
                    if !matches!(self.layers.get(i.wrapping_sub(1)), Some(LayerSpec::Dense { .. })) {
                        return Err(err("softmax must follow a dense layer".into()));
                    }
                    if k < 2 {
                        return Err(err(format!("needs at least 2 classes, got {k}")));
                    }
                    Shape::Flat(k)
                }
                (_, s) => return Err(err(format!("cannot take input of shape {s:?}"))),
            };
            shapes.push(shape);
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Softmax)) {
            return Err(Error::Shape("model must end with a softmax layer".into()));
        }
        Ok(shapes)
    }

    pub fn classes(&self) -> Result<usize> {
        match self.shapes()?.last() {
            Some(Shape::Flat(k)) => Ok(*k),
            _ => unreachable!("validated above"),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [c, t, h, w] = self.input;
        writeln!(f, "input {c} {t} {h} {w}")?;
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv3d { filters, kernel } => writeln!(
                    f,
                    "conv3d {filters} {} {} {}",
                    kernel.time, kernel.rows, kernel.cols
                )?,
                LayerSpec::MaxPool3d { window, stride } => writeln!(
                    f,
                    "maxpool3d {} {} {} {} {} {}",
                    window[0], window[1], window[2], stride[0], stride[1], stride[2]
                )?,
                LayerSpec::Flatten => writeln!(f, "flatten")?,
                LayerSpec::Dropout { rate } => writeln!(f, "dropout {rate}")?,
                LayerSpec::Dense { units } => writeln!(f, "dense {units}")?,
                LayerSpec::Tanh => writeln!(f, "tanh")?,
                LayerSpec::Softmax => writeln!(f, "softmax")?,
            }
        }
        Ok(())
    }
}

/// Parses the line format written by `Display`: `input C T H W` followed
/// by one layer per line. `#` starts a comment. `maxpool3d` accepts either
/// a window alone (stride = window) or a window and a stride.
impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut input = None;
        let mut layers = Vec::new();
        for (lineno, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Config(format!("model spec line {}: {msg}: {raw:?}", lineno + 1));
            let mut words = line.split_whitespace();
            let kind = words.next().unwrap_or_default();
            let nums: Vec<&str> = words.collect();
            let ints = || -> Result<Vec<usize>> {
                nums.iter()
                    .map(|w| w.parse::<usize>().map_err(|_| err("expected an integer")))
                    .collect()
            };
            match kind {
                "input" => {
                    let v = ints()?;
                    let [c, t, h, w] = v[..] else {
                        return Err(err("input takes 4 integers"));
                    };
                    input = Some([c, t, h, w]);
                }
                "conv3d" => {
                    let v = ints()?;
                    let [filters, t, h, w] = v[..] else {
                        return Err(err("conv3d takes filters and 3 kernel dims"));
                    };
                    layers.push(LayerSpec::Conv3d {
                        filters,
                        kernel: KernelDims::new(t, h, w),
                    });
                }
                "maxpool3d" => {
                    let v = ints()?;
                    let (window, stride) = match v[..] {
                        [a, b, c] => ([a, b, c], [a, b, c]),
                        [a, b, c, d, e, f] => ([a, b, c], [d, e, f]),
                        _ => return Err(err("maxpool3d takes 3 or 6 integers")),
                    };
                    layers.push(LayerSpec::MaxPool3d { window, stride });
                }
                "flatten" | "tanh" | "softmax" if !nums.is_empty() => {
                    return Err(err("takes no arguments"));
                }
                "flatten" => layers.push(LayerSpec::Flatten),
                "tanh" => layers.push(LayerSpec::Tanh),
                "softmax" => layers.push(LayerSpec::Softmax),
                "dropout" => {
                    let [r] = nums[..] else {
                        return Err(err("dropout takes a rate"));
                    };
                    let rate = r.parse::<f64>().map_err(|_| err("bad rate"))?;
                    layers.push(LayerSpec::Dropout { rate });
                }
                "dense" => {
                    let v = ints()?;
                    let [units] = v[..] else {
                        return Err(err("dense takes a unit count"));
                    };
                    layers.push(LayerSpec::Dense { units });
                }
                _ => return Err(err("unknown layer")),
            }
        }
        let input = input.ok_or_else(|| Error::Config("model spec has no input line".into()))?;
        let spec = ModelSpec { input, layers };
        spec.shapes()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Conv3d(Conv3dLayer),
    Dense(DenseLayer),
}

impl LayerParams {
    fn buffers(&self) -> [&[f64]; 2] {
        match self {
            LayerParams::Conv3d(l) => [l.weights(), l.bias()],
            LayerParams::Dense(l) => [l.weights(), l.bias()],
        }
    }

    fn buffers_mut(&mut self) -> [&mut [f64]; 2] {
        let (w, b) = match self {
            LayerParams::Conv3d(l) => l.buffers_mut(),
            LayerParams::Dense(l) => l.buffers_mut(),
        };
        [w, b]
    }
}

/// Learnable parameters, one entry per conv/dense layer in stack order.
/// Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LayerParams>,
}

impl ModelParams {
    /// Zero parameters matching `spec`.
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut layers = Vec::new();
        let mut prev = Shape::Volume(spec.input);
        for (layer, &shape) in spec.layers.iter().zip(&shapes) {
            match (layer, prev) {
                (LayerSpec::Conv3d { filters, kernel }, Shape::Volume(d)) => {
                    layers.push(LayerParams::Conv3d(Conv3dLayer::zeros(d[0], *filters, *kernel)?));
                }
                (LayerSpec::Dense { units }, Shape::Flat(n)) => {
                    layers.push(LayerParams::Dense(DenseLayer::zeros(n, *units)?));
                }
                _ => {}
            }
            prev = shape;
        }
        Ok(Self { layers })
    }

    /// Weight and bias buffers in declaration order.
    pub fn buffers(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.buffers_mut()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        let (a, b) = (self.buffers(), other.buffers());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape("parameter sets differ in shape".into()));
        }
        for (dst, src) in self.buffers_mut().into_iter().zip(other.buffers()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.buffers().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Glorot-uniform weights (`s = sqrt(6 / (fan_in + fan_out))`), zero
/// biases. Conv fans include the kernel volume.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut params.layers {
        let (fan_in, fan_out, weights) = match layer {
            LayerParams::Conv3d(l) => {
                let v = l.kernel().volume();
                (l.in_channels() * v, l.out_channels() * v, l.weights_mut())
            }
            LayerParams::Dense(l) => (l.inputs(), l.outputs(), l.weights_mut()),
        };
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in weights {
            *w = s * (2.0 * rng.gen::<f64>() - 1.0);
        }
    }
    Ok(params)
}

/// `p <- p - lr * g` for every parameter.
pub fn sgd_step(params: &mut ModelParams, grads: &ModelParams, learning_rate: f64) -> Result<()> {
    if learning_rate <= 0.0 || !learning_rate.is_finite() {
        return Err(Error::Parameter(format!(
            "learning rate must be positive, got {learning_rate}"
        )));
    }
    params.add_scaled(grads, -learning_rate)
}

#[derive(Clone, Debug)]
enum Activation {
    Volume(Tensor4),
    Flat(Vec<f64>),
}

impl Activation {
    fn values(&self) -> &[f64] {
        match self {
            Activation::Volume(t) => t.data(),
            Activation::Flat(v) => v,
        }
    }

    fn with_values(&self, values: Vec<f64>) -> Activation {
        match self {
            Activation::Volume(t) => Activation::Volume(Tensor4::from_parts_unchecked(t.dims(), values)),
            Activation::Flat(_) => Activation::Flat(values),
        }
    }
}

#[derive(Clone, Debug)]
enum Cache {
    Conv { input: Tensor4, output: Tensor4 },
    Pool { argmax: Vec<usize>, input_dims: [usize; 4] },
    Flatten { dims: [usize; 4] },
    Dropout { mask: Option<Vec<f64>> },
    Dense { input: Vec<f64> },
    Tanh { output: Vec<f64> },
    Softmax,
}

/// Saved intermediate values from a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    caches: Vec<Cache>,
}

/// Runs the stack on one clip and returns the class logits (the input to
/// the final softmax). With `keep_trace`, also returns what `backward`
/// needs. `rng` is only drawn from by dropout in train mode.
pub fn forward(
    spec: &ModelSpec,
    params: &ModelParams,
    input: &Tensor4,
    mode: Mode,
    rng: &mut dyn RngCore,
    keep_trace: bool,
) -> Result<(Vec<f64>, Option<ForwardTrace>)> {
    if input.dims() != spec.input {
        return Err(Error::Shape(format!(
            "model expects input {:?}, got {:?}",
            spec.input,
            input.dims()
        )));
    }
    let mut act = Activation::Volume(input.clone());
    let mut caches = Vec::with_capacity(if keep_trace { spec.layers.len() } else { 0 });
    let mut next_param = 0;

    for layer in &spec.layers {
        let (next, cache) = match (layer, act) {
            (LayerSpec::Conv3d { .. }, Activation::Volume(x)) => {
                let LayerParams::Conv3d(p) = &params.layers[next_param] else {
                    return Err(Error::Shape("parameters do not match the model spec".into()));
                };
                next_param += 1;
                let out = conv3d_forward(&x, p)?;
                let cache = keep_trace.then(|| Cache::Conv { input: x, output: out.clone() });
                (Activation::Volume(out), cache)
            }
            (LayerSpec::MaxPool3d { window, stride }, Activation::Volume(x)) => {
                let (out, argmax) = maxpool3d_forward(&x, *window, *stride)?;
                let cache = keep_trace.then(|| Cache::Pool { argmax, input_dims: x.dims() });
                (Activation::Volume(out), cache)
            }
            (LayerSpec::Flatten, Activation::Volume(x)) => {
                let dims = x.dims();
                (Activation::Flat(x.into_data()), keep_trace.then_some(Cache::Flatten { dims }))
            }
            (LayerSpec::Dropout { rate }, a) => {
                let (out, mask) = dropout(a.values(), *rate, mode, rng)?;
                (a.with_values(out), keep_trace.then_some(Cache::Dropout { mask }))
            }
            (LayerSpec::Dense { .. }, Activation::Flat(x)) => {
                let LayerParams::Dense(p) = &params.layers[next_param] else {
                    return Err(Error::Shape("parameters do not match the model spec".into()));
                };
                next_param += 1;
                let out = dense_forward(&x, p)?;
                (Activation::Flat(out), keep_trace.then_some(Cache::Dense { input: x }))
            }
            (LayerSpec::Tanh, a) => {
                let out: Vec<f64> = a.values().iter().map(|v| v.tanh()).collect();
                let cache = keep_trace.then(|| Cache::Tanh { output: out.clone() });
                (a.with_values(out), cache)
            }
            (LayerSpec::Softmax, a @ Activation::Flat(_)) => (a, keep_trace.then_some(Cache::Softmax)),
            (layer, _) => {
                return Err(Error::Shape(format!("layer {layer:?} got an incompatible input")));
            }
        };
        act = next;
        if let Some(c) = cache {
            caches.push(c);
        }
    }

    match act {
        Activation::Flat(logits) => Ok((logits, keep_trace.then_some(ForwardTrace { caches }))),
        Activation::Volume(_) => Err(Error::Shape("model output is not flat".into())),
    }
}

/// Gradients of the loss with respect to every parameter, given the
/// gradient at the logits. The first layer's input gradient is skipped.
pub fn backward(
    spec: &ModelSpec,
    params: &ModelParams,
    trace: &ForwardTrace,
    grad_logits: &[f64],
) -> Result<ModelParams> {
    if trace.caches.len() != spec.layers.len() {
        return Err(Error::Shape("trace does not match the model spec".into()));
    }
    let mut grads = ModelParams::zeros(spec)?;
    let mut param_idx = params.layers.len();
    let mut grad = Activation::Flat(grad_logits.to_vec());

    for (i, cache) in trace.caches.iter().enumerate().rev() {
        let need_input = i > 0;
        grad = match (cache, grad) {
            (Cache::Softmax, g) => g,
            (Cache::Dense { input }, Activation::Flat(g)) => {
                param_idx -= 1;
                let LayerParams::Dense(p) = &params.layers[param_idx] else {
                    return Err(Error::Shape("parameters do not match the model spec".into()));
                };
                let d = dense_backward(&g, input, p)?;
                if let LayerParams::Dense(gl) = &mut grads.layers[param_idx] {
                    gl.weights_mut().copy_from_slice(&d.weights);
                    gl.bias_mut().copy_from_slice(&d.bias);
                }
                Activation::Flat(d.input)
            }
            (Cache::Tanh { output }, g) => {
                let v = g
                    .values()
                    .iter()
                    .zip(output)
                    .map(|(g, o)| g * (1.0 - o * o))
                    .collect();
                g.with_values(v)
            }
            (Cache::Dropout { mask }, g) => {
                let v = dropout_backward(g.values(), mask.as_deref());
                g.with_values(v)
            }
            (Cache::Flatten { dims }, Activation::Flat(g)) => {
                Activation::Volume(Tensor4::from_parts_unchecked(*dims, g))
            }
            (Cache::Pool { argmax, input_dims }, Activation::Volume(g)) => {
                Activation::Volume(maxpool3d_backward(&g, argmax, *input_dims)?)
            }
            (Cache::Conv { input, output }, Activation::Volume(g)) => {
                param_idx -= 1;
                let LayerParams::Conv3d(p) = &params.layers[param_idx] else {
                    return Err(Error::Shape("parameters do not match the model spec".into()));
                };
                let (gin, gw, gb) = conv3d_backward_from_output(&g, input, output, p, need_input)?;
                if let LayerParams::Conv3d(gl) = &mut grads.layers[param_idx] {
                    gl.weights_mut().copy_from_slice(&gw);
                    gl.bias_mut().copy_from_slice(&gb);
                }
                match gin {
                    Some(t) => Activation::Volume(t),
                    None => break,
                }
            }
            _ => return Err(Error::Shape(format!("gradient shape mismatch at layer {i}"))),
        };
    }
    Ok(grads)
}

/// Eval-mode class probabilities for one clip.
pub fn predict_probs(spec: &ModelSpec, params: &ModelParams, input: &Tensor4) -> Result<Vec<f64>> {
    // Eval mode never draws from the generator.
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let (logits, _) = forward(spec, params, input, Mode::Eval, &mut unused, false)?;
    Ok(super::loss::softmax(&logits))
}
