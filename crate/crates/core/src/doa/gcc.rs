use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

const PHAT_FLOOR: f64 = 1e-12;

/// Cross-correlation over lags `-max_lag..=max_lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCorrelation {
    pub max_lag: usize,
    values: Vec<f64>,
}

impl CrossCorrelation {
    pub fn at(&self, lag: isize) -> f64 {
        if lag.unsigned_abs() > self.max_lag {
            return 0.0;
        }
        self.values[(lag + self.max_lag as isize) as usize]
    }

    /// Linear interpolation between integer lags.
    pub fn interpolate(&self, lag: f64) -> f64 {
        let lo = lag.floor();
        let frac = lag - lo;
        let lo = lo as isize;
        (1.0 - frac) * self.at(lo) + frac * self.at(lo + 1)
    }

    pub fn peak_lag(&self) -> isize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best as isize - self.max_lag as isize
    }

    /// Peak lag refined by a parabola through the peak and its neighbours.
    pub fn peak_lag_interpolated(&self) -> f64 {
        let k = self.peak_lag();
        let (a, b, c) = (self.at(k - 1), self.at(k), self.at(k + 1));
        let denom = a - 2.0 * b + c;
        if denom.abs() < 1e-300 {
            return k as f64;
        }
        k as f64 + 0.5 * (a - c) / denom
    }
}

/// Per-channel spectra shared between all pairs of a multichannel block.
pub(crate) struct PhatSpectra {
    nfft: usize,
    pub(crate) len: usize,
    spectra: Vec<Vec<Complex64>>,
    mask: Vec<bool>,
    ifft: Arc<dyn Fft<f64>>,
}

impl PhatSpectra {
    pub(crate) fn new(channels: &[&[f64]], fs: f64, band: (f64, f64)) -> Self {
        let len = channels.first().map_or(0, |c| c.len());
        let nfft = (2 * len).next_power_of_two().max(2);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(nfft);
        let ifft = planner.plan_fft_inverse(nfft);
        let spectra = channels
            .iter()
            .map(|x| {
                let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                buf.resize(nfft, Complex64::default());
                fft.process(&mut buf);
                buf
            })
            .collect();
        let mask = (0..nfft)
            .map(|k| {
                let f = k.min(nfft - k) as f64 * fs / nfft as f64;
                f >= band.0 && f <= band.1
            })
            .collect();
        Self {
            nfft,
            len,
            spectra,
            mask,
            ifft,
        }
    }

    pub(crate) fn correlate_complex(&self, i: usize, j: usize) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = self.spectra[i]
            .iter()
            .zip(&self.spectra[j])
            .zip(&self.mask)
            .map(|((a, b), &keep)| {
                if !keep {
                    return Complex64::default();
                }
                let p = a * b.conj();
                p / p.norm().max(PHAT_FLOOR)
            })
            .collect();
        self.ifft.process(&mut buf);
        let scale = 1.0 / self.nfft as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
        buf
    }

    pub(crate) fn correlate(&self, i: usize, j: usize, max_lag: usize) -> CrossCorrelation {
        let full = self.correlate_complex(i, j);
        let max_lag = max_lag.min(self.len.saturating_sub(1));
        let values = (-(max_lag as isize)..=max_lag as isize)
            .map(|l| full[l.rem_euclid(self.nfft as isize) as usize].re)
            .collect();
        CrossCorrelation { max_lag, values }
    }
}

/// PHAT-weighted cross-correlation of two equal-length signals, restricted
/// to `band` Hz. A copy of `x_i` delayed by `k` samples in `x_j` peaks at
/// lag `-k`.
pub fn gcc_phat(x_i: &[f64], x_j: &[f64], fs: f64, band: (f64, f64)) -> Result<CrossCorrelation> {
    if x_i.len() != x_j.len() {
        return Err(Error::InvalidArgument(format!(
            "gcc_phat needs equal lengths, got {} and {}",
            x_i.len(),
            x_j.len()
        )));
    }
    if x_i.is_empty() {
        return Err(Error::SignalTooShort { needed: 1, have: 0 });
    }
    let s = PhatSpectra::new(&[x_i, x_j], fs, band);
    Ok(s.correlate(0, 1, x_i.len() - 1))
}
