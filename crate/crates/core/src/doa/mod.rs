//! Grid-search azimuth estimators: wideband MUSIC and SRP-PHAT.

mod gcc;
mod music;
mod srp;
mod steering;
mod stft;

use serde::{Deserialize, Serialize};

pub use gcc::{gcc_phat, CrossCorrelation};
pub use music::{bin_covariances, music_azimuth, MusicConfig, MusicEstimator, MUSIC_CONFIDENCE_THRESHOLD};
pub use srp::{srp_phat_azimuth, srp_spectrum};
pub use steering::steering_vector;
pub use stft::{stft, StftFrame, Window};

/// Analysis band shared by both baselines, Hz.
pub const BAND_HZ: (f64, f64) = (100.0, 4000.0);
/// Baselines analyse a longer excerpt centered on the 1024-sample frame.
pub const EXCERPT_LEN: usize = 8192;
pub const NFFT: usize = 1024;
pub const HOP: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Music,
    SrpPhat,
    Beamnet,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Music => "music",
            Method::SrpPhat => "srp-phat",
            Method::Beamnet => "beamnet",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "music" => Ok(Method::Music),
            "srp-phat" | "srp" => Ok(Method::SrpPhat),
            "beamnet" => Ok(Method::Beamnet),
            _ => Err(crate::Error::InvalidArgument(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoaEstimate {
    /// Azimuth in degrees, [-180, 180).
    pub theta: f64,
    pub method: Method,
    /// Peak-to-mean ratio of the spatial spectrum.
    pub confidence: f64,
    pub low_confidence: bool,
}

/// Azimuth search grid, ascending from -180 degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct DoaGrid {
    azimuths: Vec<f64>,
}

impl DoaGrid {
    pub fn uniform(step: f64) -> crate::Result<Self> {
        if !(step > 0.0 && step <= 360.0) {
            return Err(crate::Error::InvalidArgument(format!(
                "grid step must be in (0, 360], got {step}"
            )));
        }
        let n = (360.0 / step).round() as usize;
        Ok(Self {
            azimuths: (0..n).map(|i| -180.0 + i as f64 * step).collect(),
        })
    }

    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }

    pub fn len(&self) -> usize {
        self.azimuths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.azimuths.is_empty()
    }

    /// Index of the maximum; the first (smallest azimuth) wins ties.
    pub fn argmax(&self, spectrum: &[f64]) -> usize {
        let mut best = 0;
        for (i, &v) in spectrum.iter().enumerate() {
            if v > spectrum[best] {
                best = i;
            }
        }
        best
    }
}

impl Default for DoaGrid {
    fn default() -> Self {
        Self::uniform(1.0).unwrap()
    }
}

/// Inclusive FFT bin range covering `band` for the given transform size.
pub fn band_bins(band: (f64, f64), nfft: usize, fs: f64) -> std::ops::RangeInclusive<usize> {
    let lo = (band.0 * nfft as f64 / fs).ceil() as usize;
    let hi = ((band.1 * nfft as f64 / fs).floor() as usize).min(nfft / 2);
    lo.max(1)..=hi
}

pub(crate) fn peak_to_mean(spectrum: &[f64], peak: usize) -> f64 {
    let mean = spectrum.iter().sum::<f64>() / spectrum.len() as f64;
    if mean > 0.0 {
        spectrum[peak] / mean
    } else {
        1.0
    }
}
