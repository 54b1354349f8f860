use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mono signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub fs: f64,
    pub samples: Vec<f64>,
}

impl Signal {
    pub fn new(fs: f64, samples: Vec<f64>) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {fs}"
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("signal contains non-finite samples".into()));
        }
        Ok(Self { fs, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Channel-major `n_channels x n_samples` block of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultichannelFrame {
    pub fs: f64,
    n_channels: usize,
    n_samples: usize,
    data: Vec<f64>,
}

impl MultichannelFrame {
    pub fn new(fs: f64, n_channels: usize, n_samples: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_channels * n_samples {
            return Err(Error::InvalidArgument(format!(
                "frame data has {} values, expected {n_channels} x {n_samples}",
                data.len()
            )));
        }
        if !(fs > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {fs}"
            )));
        }
        Ok(Self {
            fs,
            n_channels,
            n_samples,
            data,
        })
    }

    pub fn zeros(fs: f64, n_channels: usize, n_samples: usize) -> Self {
        Self {
            fs,
            n_channels,
            n_samples,
            data: vec![0.0; n_channels * n_samples],
        }
    }

    pub fn from_channels(fs: f64, channels: &[Vec<f64>]) -> Result<Self> {
        let n_samples = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != n_samples) {
            return Err(Error::InvalidArgument("channels have unequal lengths".into()));
        }
        let data = channels.iter().flatten().copied().collect();
        Self::new(fs, channels.len(), n_samples, data)
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.n_samples..(c + 1) * self.n_samples]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.n_samples..(c + 1) * self.n_samples]
    }

    /// Copies `len` samples starting at `start` from every channel.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.n_samples {
            return Err(Error::InvalidArgument(format!(
                "window {start}..{} exceeds frame length {}",
                start + len,
                self.n_samples
            )));
        }
        let mut data = Vec::with_capacity(self.n_channels * len);
        for c in 0..self.n_channels {
            data.extend_from_slice(&self.channel(c)[start..start + len]);
        }
        Self::new(self.fs, self.n_channels, len, data)
    }

    /// Centered window of `len` samples.
    pub fn center_window(&self, len: usize) -> Result<Self> {
        if len > self.n_samples {
            return Err(Error::SignalTooShort {
                needed: len,
                have: self.n_samples,
            });
        }
        self.window((self.n_samples - len) / 2, len)
    }

    /// Mean squared value over all channels and samples.
    pub fn power(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}
