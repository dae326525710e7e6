//! Time-major value grids.

use crate::error::{Error, Result};

/// A T×C grid of values (T time steps, C channels) with an optional
/// gradient grid of the same shape. Stored row-major: `values[t*C + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalTensor {
    times: usize,
    channels: usize,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl TemporalTensor {
    pub fn new(times: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if times == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "tensor dimensions must be at least 1x1, got {times}x{channels}"
            )));
        }
        if values.len() != times * channels {
            return Err(Error::Shape(format!(
                "expected {} values for a {times}x{channels} tensor, got {}",
                times * channels,
                values.len()
            )));
        }
        Ok(Self { times, channels, values, grad: None })
    }

    pub fn zeros(times: usize, channels: usize) -> Self {
        Self { times, channels, values: vec![0.0; times * channels], grad: None }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let times = rows.len();
        let channels = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != channels) {
            return Err(Error::Shape("ragged rows in tensor construction".into()));
        }
        Self::new(times, channels, rows.concat())
    }

    /// Single-channel column from a plain sequence.
    pub fn from_sequence(seq: &[f64]) -> Result<Self> {
        Self::new(seq.len(), 1, seq.to_vec())
    }

    pub fn times(&self) -> usize {
        self.times
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.values[t * self.channels + c]
    }

    pub fn set(&mut self, t: usize, c: usize, v: f64) {
        self.values[t * self.channels + c] = v;
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.channels..(t + 1) * self.channels]
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub(crate) fn with_grad(mut self, grad: Vec<f64>) -> Self {
        debug_assert_eq!(grad.len(), self.values.len());
        self.grad = Some(grad);
        self
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
