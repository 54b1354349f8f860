use num_complex::Complex;
use rustfft::FftPlanner;

use super::Rir;
use crate::{Error, MultichannelFrame, Result, Signal};

/// Linear convolution of a mono source signal with every RIR channel, by
/// FFT overlap-add. Output length is `signal.len() + rir.len() - 1`.
pub fn convolve(signal: &Signal, rir: &Rir) -> Result<MultichannelFrame> {
    if (signal.fs - rir.fs).abs() > 1e-9 {
        return Err(Error::SampleRateMismatch {
            left: signal.fs,
            right: rir.fs,
        });
    }
    let n_ch = rir.n_channels();
    if signal.is_empty() || rir.is_empty() {
        return Ok(MultichannelFrame::zeros(signal.fs, n_ch, 0));
    }
    let h_len = rir.len();
    let out_len = signal.len() + h_len - 1;
    let fft_len = (2 * h_len).max(1024).next_power_of_two();
    let block = fft_len - h_len + 1;

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);

    let spectra: Vec<Vec<Complex<f64>>> = rir
        .channels
        .iter()
        .map(|h| {
            let mut buf: Vec<Complex<f64>> = h.iter().map(|&v| Complex::new(v, 0.0)).collect();
            buf.resize(fft_len, Complex::default());
            fwd.process(&mut buf);
            buf
        })
        .collect();

    let mut out = MultichannelFrame::zeros(signal.fs, n_ch, out_len);
    let norm = 1.0 / fft_len as f64;
    let mut xbuf = vec![Complex::default(); fft_len];
    let mut ybuf = vec![Complex::default(); fft_len];
    for start in (0..signal.len()).step_by(block) {
        let end = (start + block).min(signal.len());
        xbuf.iter_mut().for_each(|v| *v = Complex::default());
        for (b, &s) in xbuf.iter_mut().zip(&signal.samples[start..end]) {
            b.re = s;
        }
        fwd.process(&mut xbuf);
        let valid = (end - start + h_len - 1).min(out_len - start);
        for (c, h) in spectra.iter().enumerate() {
            for ((y, x), hk) in ybuf.iter_mut().zip(&xbuf).zip(h) {
                *y = x * hk;
            }
            inv.process(&mut ybuf);
            let dst = &mut out.channel_mut(c)[start..start + valid];
            for (d, y) in dst.iter_mut().zip(&ybuf) {
                *d += y.re * norm;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn direct(x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len() + h.len() - 1];
        for (i, xi) in x.iter().enumerate() {
            for (j, hj) in h.iter().enumerate() {
                y[i + j] += xi * hj;
            }
        }
        y
    }

    fn random_rir(len: usize, n_ch: usize, seed: u64) -> Rir {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Rir {
            fs: 8000.0,
            channels: (0..n_ch)
                .map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
            image_count: 0,
        }
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (sig_len, h_len) in [(5000, 700), (100, 3000), (1, 1), (4096, 513)] {
            let x: Vec<f64> = (0..sig_len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let rir = random_rir(h_len, 2, sig_len as u64);
            let y = convolve(&Signal::new(8000.0, x.clone()).unwrap(), &rir).unwrap();
            for c in 0..2 {
                let expect = direct(&x, &rir.channels[c]);
                let scale = expect.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert_eq!(y.channel(c).len(), expect.len());
                for (a, b) in y.channel(c).iter().zip(&expect) {
                    assert!((a - b).abs() <= 1e-9 * scale, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn impulse_identity_and_shift() {
        let rir = random_rir(300, 3, 9);
        let mut x = vec![0.0; 50];
        x[0] = 1.0;
        let y = convolve(&Signal::new(8000.0, x.clone()).unwrap(), &rir).unwrap();
        for c in 0..3 {
            for (a, b) in y.channel(c)[..300].iter().zip(&rir.channels[c]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        x[0] = 0.0;
        x[17] = 1.0;
        let y = convolve(&Signal::new(8000.0, x).unwrap(), &rir).unwrap();
        for c in 0..3 {
            assert!(y.channel(c)[..17].iter().all(|v| v.abs() < 1e-12));
            for (a, b) in y.channel(c)[17..317].iter().zip(&rir.channels[c]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_rate_mismatch() {
        let rir = random_rir(10, 1, 1);
        assert!(matches!(
            convolve(&Signal::new(44100.0, vec![1.0]).unwrap(), &rir),
            Err(Error::SampleRateMismatch { .. })
        ));
    }
}
