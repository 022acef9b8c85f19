//! Fully connected layer without activation.

use super::conv::{axpy, dot};
use crate::error::{Error, Result};

/// `out = W * in + b`, with `W` stored row-major as `outputs x inputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::Shape(format!(
                "dense layer needs positive widths, got {inputs}->{outputs}"
            )));
        }
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::Shape(format!(
                "dense {inputs}->{outputs} needs {} weights and {outputs} biases, got {} and {}",
                inputs * outputs,
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Result<Self> {
        Self::new(
            inputs,
            outputs,
            vec![0.0; inputs * outputs],
            vec![0.0; outputs],
        )
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
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
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGradients {
    pub input: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn dense_forward(input: &[f64], layer: &DenseLayer) -> Result<Vec<f64>> {
    if input.len() != layer.inputs {
        return Err(Error::Shape(format!(
            "dense layer expects {} inputs, got {}",
            layer.inputs,
            input.len()
        )));
    }
    Ok(layer
        .weights
        .chunks_exact(layer.inputs)
        .zip(&layer.bias)
        .map(|(row, b)| dot(row, input) + b)
        .collect())
}

/// Returns `W^T g`, `g (x) in` and `g`.
pub fn dense_backward(
    grad_out: &[f64],
    saved_input: &[f64],
    layer: &DenseLayer,
) -> Result<DenseGradients> {
    if grad_out.len() != layer.outputs || saved_input.len() != layer.inputs {
        return Err(Error::Shape(format!(
            "dense backward: layer {}->{}, got input {} and gradient {}",
            layer.inputs,
            layer.outputs,
            saved_input.len(),
            grad_out.len()
        )));
    }
    let mut input = vec![0.0; layer.inputs];
    let mut weights = vec![0.0; layer.weights.len()];
    for ((row, grow), &g) in layer
        .weights
        .chunks_exact(layer.inputs)
        .zip(weights.chunks_exact_mut(layer.inputs))
        .zip(grad_out)
    {
        if g == 0.0 {
            continue;
        }
        axpy(g, row, &mut input);
        axpy(g, saved_input, grow);
    }
    Ok(DenseGradients {
        input,
        weights,
        bias: grad_out.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_bias_only() {
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let l = DenseLayer::new(3, 3, eye, vec![0.0; 3]).unwrap();
        assert_eq!(dense_forward(&[1.0, -2.0, 3.0], &l).unwrap(), vec![1.0, -2.0, 3.0]);

        let l = DenseLayer::new(3, 2, vec![0.0; 6], vec![0.5, -0.5]).unwrap();
        assert_eq!(dense_forward(&[1.0, 2.0, 3.0], &l).unwrap(), vec![0.5, -0.5]);
    }

    #[test]
    fn backward_by_hand() {
        // W = [[1, 2], [3, 4]], x = [5, 6], g = [1, -1]
        let l = DenseLayer::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 0.0]).unwrap();
        let g = dense_backward(&[1.0, -1.0], &[5.0, 6.0], &l).unwrap();
        assert_eq!(g.input, vec![-2.0, -2.0]);
        assert_eq!(g.weights, vec![5.0, 6.0, -5.0, -6.0]);
        assert_eq!(g.bias, vec![1.0, -1.0]);
    }

    #[test]
    fn shape_errors() {
        let l = DenseLayer::zeros(3, 2).unwrap();
        assert!(dense_forward(&[1.0], &l).is_err());
        assert!(dense_backward(&[1.0], &[1.0, 2.0, 3.0], &l).is_err());
        assert!(DenseLayer::new(2, 2, vec![0.0; 3], vec![0.0; 2]).is_err());
    }
}
