use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image::{enumerate_image_sources, ImageSource};
use super::lagrange::{lagrange_unchecked, TAPS};
use crate::{Error, MicArray, MultichannelFrame, Result, Room, SourcePosition, Vec3};

/// Extra taps appended after the last arrival so that the 8-tap filter of
/// the latest image fits.
pub const FILTER_MARGIN: usize = TAPS;

/// Minimum travel, in samples, between an image and a microphone.
const MIN_DELAY_SAMPLES: f64 = TAPS as f64;

/// Multichannel room impulse response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rir {
    pub fs: f64,
    pub channels: Vec<Vec<f64>>,
    pub image_count: usize,
}

impl Rir {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn to_frame(&self) -> MultichannelFrame {
        MultichannelFrame::from_channels(self.fs, &self.channels).expect("equal channel lengths")
    }
}

/// Acoustic propagation environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    /// Direct path only.
    FreeField,
    Room(Room),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RirConfig {
    pub fs: f64,
    pub c: f64,
    /// Arrival-time cutoff in seconds. Defaults to the room's target RT.
    #[serde(default)]
    pub max_delay: Option<f64>,
}

impl Default for RirConfig {
    fn default() -> Self {
        Self {
            fs: crate::DEFAULT_FS,
            c: crate::SPEED_OF_SOUND,
            max_delay: None,
        }
    }
}

/// Accumulates every image contribution into per-microphone tap arrays.
///
/// `mics` are absolute positions in the same frame as the images. For each
/// pair the travel `D = dist * fs / c` samples is split into `n0 = floor(D) - 3`
/// and `d = D - n0` in `[3, 4)`, and `gain / (4 pi dist) * lagrange(d)` lands
/// in `taps[n0..n0 + 8]`.
pub fn synthesize_rir(images: &[ImageSource], mics: &[Vec3], fs: f64, c: f64, len: usize) -> Result<Rir> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("image list is empty".into()));
    }
    let scale = fs / c;
    let mut channels = Vec::with_capacity(mics.len());
    for (m, mic) in mics.iter().enumerate() {
        let mut taps = vec![0.0; len];
        for img in images {
            let dist = img.position.distance(mic);
            let delay = dist * scale;
            if !(delay >= MIN_DELAY_SAMPLES) {
                return Err(Error::ImageTooClose {
                    mic: m,
                    delay_samples: delay,
                });
            }
            let n0 = delay.floor() as usize - 3;
            let frac = delay - n0 as f64;
            if n0 + TAPS > len {
                return Err(Error::InvalidArgument(format!(
                    "arrival at {delay:.1} samples does not fit in {len} taps"
                )));
            }
            let amp = img.gain / (4.0 * PI * dist);
            let coeffs = lagrange_unchecked(frac);
            for (t, k) in taps[n0..n0 + TAPS].iter_mut().zip(coeffs) {
                *t += amp * k;
            }
        }
        channels.push(taps);
    }
    Ok(Rir {
        fs,
        channels,
        image_count: images.len(),
    })
}

fn rir_len(max_delay: f64, array: &MicArray, cfg: &RirConfig) -> usize {
    ((max_delay + array.radius() / cfg.c) * cfg.fs).ceil() as usize + FILTER_MARGIN
}

/// Images and tap-array length for one source.
pub fn source_images(
    env: &Environment,
    source: &SourcePosition,
    array: &MicArray,
    cfg: &RirConfig,
) -> Result<(Vec<ImageSource>, Vec<Vec3>, usize)> {
    let rel = source.to_cartesian();
    match env {
        Environment::FreeField => {
            let images = vec![ImageSource {
                position: rel,
                reflection_order: 0,
                gain: 1.0,
            }];
            let max_delay = cfg.max_delay.unwrap_or(0.0).max(rel.norm() / cfg.c);
            Ok((images, array.positions().to_vec(), rir_len(max_delay, array, cfg)))
        }
        Environment::Room(room) => {
            let abs = room.array_origin + rel;
            if !room.contains(&abs) {
                return Err(Error::Geometry(format!(
                    "source at {:?} (room coordinates) is outside the room",
                    abs.0
                )));
            }
            let mics: Vec<Vec3> = array.positions().iter().map(|p| room.array_origin + *p).collect();
            if let Some(m) = mics.iter().position(|p| !room.contains(p)) {
                return Err(Error::Geometry(format!("microphone {m} is outside the room")));
            }
            let max_delay = cfg.max_delay.or(room.target_rt).ok_or_else(|| {
                Error::InvalidArgument("room RIR needs max_delay or a target reverberation time".into())
            })?;
            let images = enumerate_image_sources(room, abs, max_delay, cfg.c);
            Ok((images, mics, rir_len(max_delay, array, cfg)))
        }
    }
}

/// Serial RIR computation for a single source position.
pub fn source_rir(env: &Environment, source: &SourcePosition, array: &MicArray, cfg: &RirConfig) -> Result<Rir> {
    let (images, mics, len) = source_images(env, source, array, cfg)?;
    synthesize_rir(&images, &mics, cfg.fs, cfg.c, len)
}

/// RIRs for many sources, computed in parallel. Each entry is bit-identical
/// to [`source_rir`] on the same source.
pub fn batch_rirs(
    env: &Environment,
    sources: &[SourcePosition],
    array: &MicArray,
    cfg: &RirConfig,
) -> Result<Vec<Rir>> {
    sources
        .par_iter()
        .enumerate()
        .map(|(index, s)| {
            source_rir(env, s, array, cfg).map_err(|e| Error::Source {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_field_has_eight_taps() {
        let array = MicArray::uma8();
        let src = SourcePosition::new(2.0, 33.0, 88.0).unwrap();
        let rir = source_rir(&Environment::FreeField, &src, &array, &RirConfig::default()).unwrap();
        assert_eq!(rir.n_channels(), 7);
        for ch in &rir.channels {
            assert_eq!(ch.iter().filter(|v| **v != 0.0).count(), 8);
        }
    }

    #[test]
    fn integer_distance_gives_single_tap() {
        // 300 samples of travel at fs = 34300, c = 343 is exactly 3 m
        let img = ImageSource {
            position: Vec3::new(3.0, 0.0, 0.0),
            reflection_order: 0,
            gain: 1.0,
        };
        let rir = synthesize_rir(&[img], &[Vec3::ZERO], 34_300.0, 343.0, 400).unwrap();
        let nz: Vec<_> = rir.channels[0].iter().enumerate().filter(|(_, v)| **v != 0.0).collect();
        assert_eq!(nz.len(), 1);
        assert_eq!(nz[0].0, 300);
        assert!((nz[0].1 - 1.0 / (4.0 * PI * 3.0)).abs() < 1e-15);
    }

    #[test]
    fn peak_location() {
        let array = MicArray::uma8();
        let src = SourcePosition::new(2.0, 0.0, 90.0).unwrap();
        let rir = source_rir(&Environment::FreeField, &src, &array, &RirConfig::default()).unwrap();
        let ch = &rir.channels[0];
        let peak = (0..ch.len())
            .max_by(|&a, &b| ch[a].abs().total_cmp(&ch[b].abs()))
            .unwrap();
        // 2 * 44100 / 343 = 257.14
        assert_eq!(peak, 257);
    }

    #[test]
    fn rejects_close_image() {
        let img = ImageSource {
            position: Vec3::new(0.01, 0.0, 0.0),
            reflection_order: 0,
            gain: 1.0,
        };
        assert!(matches!(
            synthesize_rir(&[img], &[Vec3::ZERO], 44_100.0, 343.0, 100),
            Err(Error::ImageTooClose { .. })
        ));
        assert!(synthesize_rir(&[], &[Vec3::ZERO], 44_100.0, 343.0, 100).is_err());
    }

    #[test]
    fn batch_matches_serial_bitwise() {
        let room = Room::new(Vec3::new(5.0, 5.0, 4.0), 0.4, Vec3::new(2.5, 2.5, 1.5)).unwrap();
        let env = Environment::Room(room);
        let cfg = RirConfig {
            max_delay: Some(0.05),
            ..Default::default()
        };
        let array = MicArray::uma8();
        let sources: Vec<_> = (0..10)
            .map(|i| SourcePosition::new(1.0 + 0.05 * i as f64, -170.0 + 35.0 * i as f64, 80.0 + i as f64).unwrap())
            .collect();
        let batch = batch_rirs(&env, &sources, &array, &cfg).unwrap();
        assert_eq!(batch.len(), 10);
        for (s, r) in sources.iter().zip(&batch) {
            assert_eq!(&source_rir(&env, s, &array, &cfg).unwrap(), r);
        }
    }

    #[test]
    fn batch_reports_failing_index() {
        let room = Room::new(Vec3::new(5.0, 5.0, 4.0), 0.4, Vec3::new(2.5, 2.5, 1.5)).unwrap();
        let env = Environment::Room(room);
        let cfg = RirConfig {
            max_delay: Some(0.02),
            ..Default::default()
        };
        let sources = vec![
            SourcePosition::new(1.0, 0.0, 90.0).unwrap(),
            SourcePosition::new(9.0, 0.0, 90.0).unwrap(),
        ];
        match batch_rirs(&env, &sources, &MicArray::uma8(), &cfg) {
            Err(Error::Source { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
