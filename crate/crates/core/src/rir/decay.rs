//! Reverberation-time estimation by Schroeder backward integration.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::{Error, Result};

/// Schroeder energy decay curve in dB, normalized to 0 dB at `t = 0`.
pub fn schroeder_curve(h: &[f64]) -> Vec<f64> {
    let mut edc = vec![0.0; h.len()];
    let mut acc = 0.0;
    for i in (0..h.len()).rev() {
        acc += h[i] * h[i];
        edc[i] = acc;
    }
    let total = edc.first().copied().unwrap_or(0.0);
    edc.iter().map(|&e| 10.0 * (e / total).log10()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rt60: f64,
    /// Least-squares slope of the decay curve in dB per second.
    pub slope: f64,
}

/// RT60 extrapolated from a linear fit of the decay curve between `hi_db` and
/// `lo_db` (e.g. -5 and -25 for T20).
pub fn rt60_between(h: &[f64], fs: f64, hi_db: f64, lo_db: f64) -> Result<DecayFit> {
    if h.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroPower);
    }
    let edc = schroeder_curve(h);
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &e) in edc.iter().enumerate() {
        if e <= hi_db && e >= lo_db {
            let t = i as f64 / fs;
            n += 1.0;
            sx += t;
            sy += e;
            sxx += t * t;
            sxy += t * e;
        }
    }
    if n < 2.0 {
        return Err(Error::InvalidArgument(format!(
            "decay curve never spans {hi_db} .. {lo_db} dB"
        )));
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    if !(slope < 0.0) {
        return Err(Error::InvalidArgument("decay curve is not decreasing".into()));
    }
    Ok(DecayFit {
        rt60: -60.0 / slope,
        slope,
    })
}

/// T20 estimate of RT60 (fit over -5 .. -25 dB).
pub fn schroeder_rt60(h: &[f64], fs: f64) -> Result<f64> {
    rt60_between(h, fs, -5.0, -25.0).map(|f| f.rt60)
}

/// Zero-phase brick-wall band limit of `h` to `[lo, hi]` Hz.
pub fn band_limit(h: &[f64], fs: f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = (2 * h.len()).next_power_of_two().max(2);
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n, Complex64::default());
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * fs / n as f64;
        if f < lo || f > hi {
            *b = Complex64::default();
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf[..h.len()].iter().map(|v| v.re / n as f64).collect()
}

/// T20 measured above `cutoff` Hz. Image-source RIRs carry a large DC
/// component (all reflection gains are positive) that otherwise dominates
/// the late decay.
pub fn schroeder_rt60_highpass(h: &[f64], fs: f64, cutoff: f64) -> Result<f64> {
    schroeder_rt60(&band_limit(h, fs, cutoff, f64::INFINITY), fs)
}
