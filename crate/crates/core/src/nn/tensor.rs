use alloc::vec::Vec;

use crate::error::bail;
use crate::Result;

/// A batch of `length × channels` sequences, channels-last:
/// `data[(b·length + t)·channels + c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub batch: usize,
    pub length: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(batch: usize, length: usize, channels: usize) -> Self {
        Self {
            batch,
            length,
            channels,
            data: alloc::vec![0.0; batch * length * channels],
        }
    }

    pub fn from_vec(batch: usize, length: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * length * channels {
            bail!(
                InvalidInput,
                "{} values for a {batch}x{length}x{channels} tensor",
                data.len()
            );
        }
        Ok(Self {
            batch,
            length,
            channels,
            data,
        })
    }

    /// Values per sample.
    pub fn sample_len(&self) -> usize {
        self.length * self.channels
    }

    pub fn sample(&self, b: usize) -> &[f64] {
        let n = self.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.sample_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        (self.batch, self.length, self.channels) == (other.batch, other.length, other.channels)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
