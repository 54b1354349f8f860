use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::resample::resample;
use crate::{Error, Result, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    White,
    Pink,
    /// White noise gated on and off in 50-300 ms segments.
    Bursts,
    /// Harmonic series on a gliding fundamental, a crude voiced-speech proxy.
    Harmonic,
}

/// Where the source signals of a dataset come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalSource {
    Synthetic {
        kinds: Vec<SyntheticKind>,
        /// Signals per kind.
        count: usize,
        seconds: f64,
    },
    Wav {
        files: Vec<PathBuf>,
    },
    WavDir {
        dir: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub id: String,
    pub signal: Signal,
}

/// Source signals, all at the dataset sample rate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignalBank {
    pub entries: Vec<BankEntry>,
}

impl SignalBank {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn load(source: &SignalSource, fs: f64, seed: u64) -> Result<Self> {
        let entries = match source {
            SignalSource::Synthetic { kinds, count, seconds } => {
                let n = (seconds * fs).round() as usize;
                let mut out = Vec::new();
                for (ki, kind) in kinds.iter().enumerate() {
                    for i in 0..*count {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(((ki as u64) << 32) | i as u64);
                        out.push(BankEntry {
                            id: format!("{kind:?}-{i}").to_lowercase(),
                            signal: synthesize(*kind, n, fs, &mut rng),
                        });
                    }
                }
                out
            }
            SignalSource::Wav { files } => files.iter().map(|p| load_mono(p, fs)).collect::<Result<Vec<_>>>()?,
            SignalSource::WavDir { dir } => {
                let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
                    .map_err(|e| Error::io(dir, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                    .collect();
                files.sort();
                files.iter().map(|p| load_mono(p, fs)).collect::<Result<Vec<_>>>()?
            }
        };
        if entries.is_empty() {
            return Err(Error::InvalidArgument("signal bank is empty".into()));
        }
        Ok(Self { entries })
    }
}

/// Loads a WAV file, averaging channels down to mono and resampling to `fs`.
fn load_mono(path: &Path, fs: f64) -> Result<BankEntry> {
    let frame = crate::wav::read_wav(path)?;
    let n_ch = frame.n_channels() as f64;
    let mono: Vec<f64> = (0..frame.n_samples())
        .map(|i| (0..frame.n_channels()).map(|c| frame.channel(c)[i]).sum::<f64>() / n_ch)
        .collect();
    let signal = resample(&Signal::new(frame.fs, mono)?, fs)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(BankEntry { id, signal })
}

pub fn synthesize<R: Rng + ?Sized>(kind: SyntheticKind, n: usize, fs: f64, rng: &mut R) -> Signal {
    fn white<R: Rng + ?Sized>(rng: &mut R) -> f64 {
        StandardNormal.sample(rng)
    }
    let samples: Vec<f64> = match kind {
        SyntheticKind::White => (0..n).map(|_| white(rng)).collect(),
        SyntheticKind::Pink => {
            // Paul Kellet's economy pink filter
            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
            (0..n)
                .map(|_| {
                    let w = white(rng);
                    b0 = 0.99765 * b0 + w * 0.0990460;
                    b1 = 0.96300 * b1 + w * 0.2965164;
                    b2 = 0.57000 * b2 + w * 1.0526913;
                    (b0 + b1 + b2 + w * 0.1848) * 0.25
                })
                .collect()
        }
        SyntheticKind::Bursts => {
            let mut out = Vec::with_capacity(n);
            let mut on = true;
            while out.len() < n {
                let seg = (rng.random_range(0.05..0.3) * fs) as usize;
                for _ in 0..seg.min(n - out.len()) {
                    let w = white(rng);
                    out.push(if on { w } else { 0.0 });
                }
                on = !on;
            }
            out
        }
        SyntheticKind::Harmonic => {
            let f0_start = rng.random_range(90.0..250.0);
            let f0_end = rng.random_range(90.0..250.0);
            let n_harm = 30;
            let phases: Vec<f64> = (0..n_harm)
                .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                .collect();
            let mut phase = 0.0;
            (0..n)
                .map(|i| {
                    let frac = i as f64 / n.max(1) as f64;
                    let f0 = f0_start + (f0_end - f0_start) * frac;
                    phase += std::f64::consts::TAU * f0 / fs;
                    let mut v = 0.0;
                    for (h, ph) in phases.iter().enumerate() {
                        let k = (h + 1) as f64;
                        if k * f0 < fs / 2.0 {
                            v += (k * phase + ph).sin() / k;
                        }
                    }
                    v + 0.05 * white(rng)
                })
                .collect()
        }
    };
    Signal { fs, samples }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_bank_is_deterministic() {
        let src = SignalSource::Synthetic {
            kinds: vec![
                SyntheticKind::White,
                SyntheticKind::Pink,
                SyntheticKind::Bursts,
                SyntheticKind::Harmonic,
            ],
            count: 2,
            seconds: 0.1,
        };
        let a = SignalBank::load(&src, 16_000.0, 9).unwrap();
        let b = SignalBank::load(&src, 16_000.0, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        assert!(a.entries.iter().all(|e| e.signal.len() == 1600 && e.signal.rms() > 0.0));
        assert_ne!(a.entries[0].signal, a.entries[1].signal);
    }

    #[test]
    fn wav_dir_bank() {
        let dir = tempfile::tempdir().unwrap();
        let frame = crate::MultichannelFrame::from_channels(8000.0, &[vec![0.5; 800], vec![0.25; 800]]).unwrap();
        crate::wav::write_wav_f32(dir.path().join("a.wav"), &frame).unwrap();
        let bank = SignalBank::load(&SignalSource::WavDir { dir: dir.path().into() }, 16_000.0, 0).unwrap();
        assert_eq!(bank.ids(), vec!["a".to_string()]);
        assert_eq!(bank.entries[0].signal.len(), 1600);
        assert!((bank.entries[0].signal.samples[800] - 0.375).abs() < 1e-3);
    }

    #[test]
    fn empty_bank_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(SignalBank::load(&SignalSource::WavDir { dir: dir.path().into() }, 16_000.0, 0).is_err());
    }
}
