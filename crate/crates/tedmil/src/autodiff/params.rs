//! Learnable parameter storage.

use crate::error::{Error, Result};

/// One learnable array: values plus a gradient slot and an Adagrad
/// accumulator of identical length.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamArray {
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
    pub accum: Vec<f64>,
}

impl ParamArray {
    pub fn new(values: Vec<f64>) -> Self {
        let n = values.len();
        Self { values, grad: vec![0.0; n], accum: vec![0.0; n] }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn clear_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn add_grad(&mut self, contribution: &[f64]) {
        debug_assert_eq!(contribution.len(), self.grad.len());
        for (g, c) in self.grad.iter_mut().zip(contribution) {
            *g += c;
        }
    }
}

/// Parameters of one temporal convolution layer.
///
/// Kernels are stored flat as `[out_channel][tap][in_channel]`, where tap
/// `k` of `kernel_length` reads input time `t - (kernel_length-1) + k`:
/// the last tap is the current step, earlier taps look further back.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerParams {
    pub kernels: ParamArray,
    pub bias: ParamArray,
    pub out_channels: usize,
    pub kernel_length: usize,
    pub in_channels: usize,
}

impl ConvLayerParams {
    pub fn new(
        out_channels: usize,
        kernel_length: usize,
        in_channels: usize,
        kernels: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if out_channels == 0 || kernel_length == 0 || in_channels == 0 {
            return Err(Error::Shape(format!(
                "conv layer dimensions must be at least 1, got {out_channels}x{kernel_length}x{in_channels}"
            )));
        }
        if kernels.len() != out_channels * kernel_length * in_channels {
            return Err(Error::Shape(format!(
                "expected {} kernel weights, got {}",
                out_channels * kernel_length * in_channels,
                kernels.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::Shape(format!(
                "expected {out_channels} bias entries, got {}",
                bias.len()
            )));
        }
        Ok(Self {
            kernels: ParamArray::new(kernels),
            bias: ParamArray::new(bias),
            out_channels,
            kernel_length,
            in_channels,
        })
    }

    pub fn zeros(out_channels: usize, kernel_length: usize, in_channels: usize) -> Result<Self> {
        Self::new(
            out_channels,
            kernel_length,
            in_channels,
            vec![0.0; out_channels * kernel_length * in_channels],
            vec![0.0; out_channels],
        )
    }

    pub fn kernel_index(&self, out_c: usize, tap: usize, in_c: usize) -> usize {
        (out_c * self.kernel_length + tap) * self.in_channels + in_c
    }
}

/// The time-distributed dense head: one affine map shared by every step.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weights: ParamArray,
    pub bias: ParamArray,
}

impl DenseParams {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self { weights: ParamArray::new(weights), bias: ParamArray::new(vec![bias]) }
    }

    pub fn in_channels(&self) -> usize {
        self.weights.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_shape_validation() {
        assert!(ConvLayerParams::new(2, 3, 4, vec![0.0; 24], vec![0.0; 2]).is_ok());
        assert!(ConvLayerParams::new(2, 3, 4, vec![0.0; 23], vec![0.0; 2]).is_err());
        assert!(ConvLayerParams::new(2, 3, 4, vec![0.0; 24], vec![0.0; 3]).is_err());
        assert!(ConvLayerParams::new(0, 3, 4, vec![], vec![]).is_err());
    }

    #[test]
    fn grad_slots_match_value_shapes() {
        let layer = ConvLayerParams::zeros(3, 2, 5).unwrap();
        assert_eq!(layer.kernels.grad.len(), layer.kernels.values.len());
        assert_eq!(layer.bias.grad.len(), 3);
        assert_eq!(layer.kernels.accum.len(), 30);
    }

    #[test]
    fn grad_accumulates_and_clears() {
        let mut p = ParamArray::zeros(3);
        p.add_grad(&[1.0, 2.0, 3.0]);
        p.add_grad(&[1.0, 0.0, -1.0]);
        assert_eq!(p.grad, vec![2.0, 2.0, 2.0]);
        p.clear_grad();
        assert_eq!(p.grad, vec![0.0; 3]);
    }
}
