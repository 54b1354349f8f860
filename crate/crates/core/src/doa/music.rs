use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::steering::steering_vector;
use super::stft::{stft, StftFrame, Window};
use super::{band_bins, peak_to_mean, DoaEstimate, DoaGrid, Method, BAND_HZ, HOP, NFFT};
use crate::{Error, MicArray, MultichannelFrame, Result, SPEED_OF_SOUND};

/// Peak-to-mean ratio of the averaged pseudo-spectrum below which an
/// estimate is flagged. Noise-only excerpts stay well below it, sources at
/// moderate SNR well above (see the calibration test).
pub const MUSIC_CONFIDENCE_THRESHOLD: f64 = 1.6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MusicConfig {
    pub nfft: usize,
    pub hop: usize,
    pub band: (f64, f64),
    pub n_sources: usize,
    pub c: f64,
}

impl Default for MusicConfig {
    fn default() -> Self {
        Self {
            nfft: NFFT,
            hop: HOP,
            band: BAND_HZ,
            n_sources: 1,
            c: SPEED_OF_SOUND,
        }
    }
}

/// Snapshot-averaged spatial covariance for each bin in `bins`.
pub fn bin_covariances(snapshots: &[StftFrame], bins: impl Iterator<Item = usize>) -> Vec<DMatrix<Complex64>> {
    let n_c = snapshots.first().map_or(0, |s| s.n_channels);
    let scale = 1.0 / snapshots.len().max(1) as f64;
    bins.map(|k| {
        let mut r = DMatrix::<Complex64>::zeros(n_c, n_c);
        for s in snapshots {
            for a in 0..n_c {
                let xa = s.bin(a, k);
                for b in 0..n_c {
                    r[(a, b)] += xa * s.bin(b, k).conj();
                }
            }
        }
        r * Complex64::new(scale, 0.0)
    })
    .collect()
}

/// Wideband MUSIC with steering vectors precomputed for one array, grid
/// and sample rate.
#[derive(Debug, Clone)]
pub struct MusicEstimator {
    cfg: MusicConfig,
    grid: DoaGrid,
    n_c: usize,
    fs: f64,
    bins: Vec<usize>,
    /// `[bin][theta][mic]`, flattened.
    steering: Vec<Complex64>,
}

impl MusicEstimator {
    pub fn new(array: &MicArray, grid: &DoaGrid, fs: f64, cfg: MusicConfig) -> Result<Self> {
        if cfg.n_sources == 0 || cfg.n_sources >= array.len() {
            return Err(Error::InvalidArgument(format!(
                "n_sources must be in 1..{}, got {}",
                array.len(),
                cfg.n_sources
            )));
        }
        let bins: Vec<usize> = band_bins(cfg.band, cfg.nfft, fs).collect();
        if bins.is_empty() {
            return Err(Error::InvalidArgument("analysis band holds no FFT bins".into()));
        }
        let mut steering = Vec::with_capacity(bins.len() * grid.len() * array.len());
        for &k in &bins {
            let f = k as f64 * fs / cfg.nfft as f64;
            for &theta in grid.azimuths() {
                steering.extend(steering_vector(array, theta, f, cfg.c));
            }
        }
        Ok(Self {
            cfg,
            grid: grid.clone(),
            n_c: array.len(),
            fs,
            bins,
            steering,
        })
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    /// Mean of the per-bin max-normalized pseudo-spectra, or `None` when
    /// every bin covariance is degenerate.
    pub fn spectrum(&self, frame: &MultichannelFrame) -> Result<Option<Vec<f64>>> {
        if frame.n_channels() != self.n_c {
            return Err(Error::InvalidArgument(format!(
                "frame has {} channels but the array has {} mics",
                frame.n_channels(),
                self.n_c
            )));
        }
        if frame.fs != self.fs {
            return Err(Error::SampleRateMismatch {
                left: frame.fs,
                right: self.fs,
            });
        }
        let snapshots = stft(frame, self.cfg.nfft, self.cfg.hop, Window::Hann)?;
        if snapshots.len() < self.n_c {
            return Err(Error::SignalTooShort {
                needed: self.cfg.nfft + (self.n_c - 1) * self.cfg.hop,
                have: frame.n_samples(),
            });
        }
        let covs = bin_covariances(&snapshots, self.bins.iter().copied());
        let n_theta = self.grid.len();
        let n_noise = self.n_c - self.cfg.n_sources;
        let mut acc = vec![0.0; n_theta];
        let mut used = 0usize;
        let mut p = vec![0.0; n_theta];
        for (b, r) in covs.into_iter().enumerate() {
            let trace: f64 = (0..self.n_c).map(|i| r[(i, i)].re).sum();
            if !(trace > 0.0 && trace.is_finite()) {
                continue;
            }
            let eig = SymmetricEigen::new(r);
            let mut order: Vec<usize> = (0..self.n_c).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
            let noise: Vec<Vec<Complex64>> = order[..n_noise]
                .iter()
                .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
                .collect();
            let base = b * n_theta * self.n_c;
            for (t, pt) in p.iter_mut().enumerate() {
                let a = &self.steering[base + t * self.n_c..base + (t + 1) * self.n_c];
                let proj: f64 = noise
                    .iter()
                    .map(|e| {
                        e.iter()
                            .zip(a)
                            .map(|(ei, ai)| ei.conj() * ai)
                            .sum::<Complex64>()
                            .norm_sqr()
                    })
                    .sum();
                *pt = 1.0 / proj.max(1e-300);
            }
            let max = p.iter().copied().fold(0.0, f64::max);
            for (a, v) in acc.iter_mut().zip(&p) {
                *a += v / max;
            }
            used += 1;
        }
        if used == 0 {
            return Ok(None);
        }
        acc.iter_mut().for_each(|v| *v /= used as f64);
        Ok(Some(acc))
    }

    pub fn estimate(&self, frame: &MultichannelFrame) -> Result<DoaEstimate> {
        Ok(match self.spectrum(frame)? {
            Some(s) => {
                let best = self.grid.argmax(&s);
                let confidence = peak_to_mean(&s, best);
                DoaEstimate {
                    theta: self.grid.azimuths()[best],
                    method: Method::Music,
                    confidence,
                    low_confidence: confidence < MUSIC_CONFIDENCE_THRESHOLD,
                }
            }
            None => DoaEstimate {
                theta: self.grid.azimuths()[0],
                method: Method::Music,
                confidence: 1.0,
                low_confidence: true,
            },
        })
    }
}

pub fn music_azimuth(
    frame: &MultichannelFrame,
    array: &MicArray,
    grid: &DoaGrid,
    cfg: MusicConfig,
) -> Result<DoaEstimate> {
    MusicEstimator::new(array, grid, frame.fs, cfg)?.estimate(frame)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use crate::angular_distance;
    use crate::doa::testutil::free_field_excerpt;
    use crate::doa::EXCERPT_LEN;

    fn estimator(array: &MicArray) -> MusicEstimator {
        MusicEstimator::new(array, &DoaGrid::default(), 44100.0, MusicConfig::default()).unwrap()
    }

    #[test]
    fn free_field_high_snr() {
        let array = MicArray::uma8();
        let m = estimator(&array);
        for (k, theta) in [30.0, -120.0, 171.4].into_iter().enumerate() {
            let f = free_field_excerpt(&array, theta, 40.0, 10 + k as u64);
            let est = m.estimate(&f).unwrap();
            assert!(angular_distance(est.theta, theta) <= 1.0, "{theta} -> {}", est.theta);
            assert!(!est.low_confidence);
        }
    }

    #[test]
    fn mirrored_sources() {
        let array = MicArray::uma8();
        let m = estimator(&array);
        let a = m.estimate(&free_field_excerpt(&array, 50.0, 40.0, 3)).unwrap();
        let b = m.estimate(&free_field_excerpt(&array, -50.0, 40.0, 3)).unwrap();
        assert!((a.theta + b.theta).abs() <= 1.0, "{} {}", a.theta, b.theta);
    }

    #[test]
    fn scale_invariance() {
        let array = MicArray::uma8();
        let m = estimator(&array);
        let f = free_field_excerpt(&array, -75.0, 10.0, 4);
        let mut g = f.clone();
        g.scale(10.0);
        assert_eq!(m.estimate(&f).unwrap().theta, m.estimate(&g).unwrap().theta);
    }

    #[test]
    fn covariance_is_hermitian() {
        let f = free_field_excerpt(&MicArray::uma8(), 10.0, 20.0, 5);
        let snaps = stft(&f, NFFT, HOP, Window::Hann).unwrap();
        for r in bin_covariances(&snaps, 3..=92) {
            let diff = (&r - r.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(diff <= 1e-12);
        }
    }

    #[test]
    fn rotation_equivariance() {
        let array = MicArray::uma8();
        let rotated = array.rotated(-40.0);
        let theta = 100.0;
        let e0 = estimator(&array)
            .estimate(&free_field_excerpt(&array, theta, 30.0, 6))
            .unwrap();
        let e1 = estimator(&rotated)
            .estimate(&free_field_excerpt(&rotated, theta - 40.0, 30.0, 6))
            .unwrap();
        let d0 = angular_distance(e0.theta, theta);
        let d1 = angular_distance(e1.theta, theta - 40.0);
        assert!((d0 - d1).abs() <= 1.0);
    }

    #[test]
    fn confidence_calibration() {
        let array = MicArray::uma8();
        let m = estimator(&array);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut noise_max: f64 = 0.0;
        for _ in 0..20 {
            let data = (0..7 * EXCERPT_LEN).map(|_| StandardNormal.sample(&mut rng)).collect();
            let f = MultichannelFrame::new(44100.0, 7, EXCERPT_LEN, data).unwrap();
            let est = m.estimate(&f).unwrap();
            noise_max = noise_max.max(est.confidence);
            assert!(est.low_confidence, "noise confidence {}", est.confidence);
        }
        let mut source_min = f64::INFINITY;
        for k in 0..10 {
            let f = free_field_excerpt(&array, -170.0 + 35.0 * k as f64, 10.0, 100 + k);
            source_min = source_min.min(m.estimate(&f).unwrap().confidence);
        }
        eprintln!("noise max {noise_max:.3}, source min {source_min:.3}");
        assert!(source_min > MUSIC_CONFIDENCE_THRESHOLD);
    }

    #[test]
    fn degenerate_input_is_flagged() {
        let m = estimator(&MicArray::uma8());
        let est = m.estimate(&MultichannelFrame::zeros(44100.0, 7, EXCERPT_LEN)).unwrap();
        assert!(est.low_confidence);
        assert!(m.estimate(&MultichannelFrame::zeros(44100.0, 7, 2048)).is_err());
    }
}
