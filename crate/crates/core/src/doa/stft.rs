use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::{Error, MultichannelFrame, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(&self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

/// One analysis snapshot, `n_channels x n_freq` channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StftFrame {
    pub bins: Vec<Complex64>,
    pub n_channels: usize,
    pub fs: f64,
    pub nfft: usize,
    pub hop: usize,
}

impl StftFrame {
    pub fn n_freq(&self) -> usize {
        self.nfft / 2 + 1
    }

    pub fn bin(&self, channel: usize, k: usize) -> Complex64 {
        self.bins[channel * self.n_freq() + k]
    }
}

pub fn stft(frame: &MultichannelFrame, nfft: usize, hop: usize, window: Window) -> Result<Vec<StftFrame>> {
    let n_t = frame.n_samples();
    if nfft == 0 || hop == 0 {
        return Err(Error::InvalidArgument("nfft and hop must be positive".into()));
    }
    if nfft > n_t {
        return Err(Error::SignalTooShort {
            needed: nfft,
            have: n_t,
        });
    }
    let win = window.coefficients(nfft);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let n_freq = nfft / 2 + 1;
    let n_c = frame.n_channels();
    let mut buf = vec![Complex64::default(); nfft];
    let mut out = Vec::new();
    let mut start = 0;
    while start + nfft <= n_t {
        let mut bins = Vec::with_capacity(n_c * n_freq);
        for c in 0..n_c {
            let x = &frame.channel(c)[start..start + nfft];
            for ((b, &v), &w) in buf.iter_mut().zip(x).zip(&win) {
                *b = Complex64::new(v * w, 0.0);
            }
            fft.process(&mut buf);
            bins.extend_from_slice(&buf[..n_freq]);
        }
        out.push(StftFrame {
            bins,
            n_channels: n_c,
            fs: frame.fs,
            nfft,
            hop,
        });
        start += hop;
    }
    Ok(out)
}
