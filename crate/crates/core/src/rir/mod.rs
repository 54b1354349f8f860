//! Image-source room impulse responses with order-7 Lagrange fractional
//! delays.

mod convolve;
mod decay;
mod image;
mod lagrange;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use convolve::convolve;
pub use decay::{band_limit, rt60_between, schroeder_curve, schroeder_rt60, schroeder_rt60_highpass, DecayFit};
pub use image::{enumerate_image_sources, ImageSource};
pub use lagrange::{lagrange_coeffs, TAPS};
pub use synth::{batch_rirs, source_images, source_rir, synthesize_rir, Environment, Rir, RirConfig, FILTER_MARGIN};

use crate::{Error, Result, SourcePosition, Vec3};

/// Uniform absorption coefficient giving reverberation time `target_rt` by
/// Eyring's formula, `alpha = 1 - exp(-0.161 V / (S T))`.
pub fn eyring_absorption(dims: Vec3, target_rt: f64) -> Result<f64> {
    if !dims.0.iter().all(|&d| d > 0.0 && d.is_finite()) {
        return Err(Error::Geometry(format!(
            "room dimensions must be positive, got {:?}",
            dims.0
        )));
    }
    if !(target_rt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target RT must be positive, got {target_rt}"
        )));
    }
    let [x, y, z] = dims.0;
    let volume = x * y * z;
    let surface = 2.0 * (x * y + y * z + x * z);
    let alpha = 1.0 - (-0.161 * volume / (surface * target_rt)).exp();
    if !(alpha < 1.0) || alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "target RT {target_rt} s is not reachable in this room (alpha = {alpha})"
        )));
    }
    Ok(alpha)
}

/// JSON metadata written next to an exported RIR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RirSidecar {
    pub room_dims: Option<Vec3>,
    pub absorption: Option<f64>,
    pub array_origin: Option<Vec3>,
    pub source: SourcePosition,
    pub fs: f64,
    pub c: f64,
    pub image_count: usize,
}

/// Writes `<stem>.wav` (32-bit float, one channel per microphone) and
/// `<stem>.json` into `dir`.
pub fn export_rir(dir: &Path, stem: &str, rir: &Rir, sidecar: &RirSidecar) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    crate::wav::write_wav_f32(dir.join(format!("{stem}.wav")), &rir.to_frame())?;
    let json_path = dir.join(format!("{stem}.json"));
    let json = serde_json::to_string_pretty(sidecar)?;
    std::fs::write(&json_path, json).map_err(|e| Error::io(json_path, e))
}
