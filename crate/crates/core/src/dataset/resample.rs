//! Windowed-sinc sample-rate conversion (Kaiser window, 64 taps).

use crate::{Error, Result, Signal};

const HALF_TAPS: i64 = 32;
const KAISER_BETA: f64 = 8.0;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / bessel_i0(KAISER_BETA)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

pub fn resample(signal: &Signal, fs_out: f64) -> Result<Signal> {
    if !(fs_out > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target rate must be positive, got {fs_out}"
        )));
    }
    if (signal.fs - fs_out).abs() < 1e-9 {
        return Ok(signal.clone());
    }
    let ratio = signal.fs / fs_out;
    let cutoff = (fs_out / signal.fs).min(1.0);
    let n_out = ((signal.len() as f64) / ratio).floor() as usize;
    let x = &signal.samples;
    let mut out = Vec::with_capacity(n_out);
    for j in 0..n_out {
        let t = j as f64 * ratio;
        let center = t.floor() as i64;
        let mut acc = 0.0;
        for k in center - HALF_TAPS + 1..=center + HALF_TAPS {
            if k < 0 || k as usize >= x.len() {
                continue;
            }
            let dt = t - k as f64;
            acc += x[k as usize] * cutoff * sinc(cutoff * dt) * kaiser(dt / HALF_TAPS as f64);
        }
        out.push(acc);
    }
    Signal::new(fs_out, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_rate() {
        let s = Signal::new(8000.0, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(resample(&s, 8000.0).unwrap(), s);
    }

    #[test]
    fn tone_survives_upsampling() {
        let fs_in = 16_000.0;
        let f = 440.0;
        let x: Vec<f64> = (0..16_000)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs_in).sin())
            .collect();
        let y = resample(&Signal::new(fs_in, x).unwrap(), 44_100.0).unwrap();
        assert_eq!(y.len(), 44_100);
        // compare away from the edges
        for i in 1000..40_000 {
            let expect = (2.0 * std::f64::consts::PI * f * i as f64 / 44_100.0).sin();
            assert!((y.samples[i] - expect).abs() < 2e-3, "{i}");
        }
    }

    #[test]
    fn downsampling_rejects_above_nyquist() {
        let fs_in = 44_100.0;
        // 15 kHz is above the 8 kHz Nyquist of the target
        let x: Vec<f64> = (0..44_100)
            .map(|i| (2.0 * std::f64::consts::PI * 15_000.0 * i as f64 / fs_in).sin())
            .collect();
        let y = resample(&Signal::new(fs_in, x).unwrap(), 16_000.0).unwrap();
        let rms = (y.samples[500..15_000].iter().map(|v| v * v).sum::<f64>() / 14_500.0).sqrt();
        assert!(rms < 0.01, "{rms}");
    }
}
