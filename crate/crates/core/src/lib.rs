//! Acoustic microphone-array workbench: scene geometry, image-source room
//! impulse responses with fractional delays, labeled direction-of-arrival
//! datasets, and the wideband MUSIC / SRP-PHAT baselines.

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod doa;
mod error;
pub mod geometry;
pub mod rir;
pub mod rng;
pub mod signal;
pub mod wav;

pub use error::{Error, Result};
pub use geometry::{angular_distance, classify_azimuth, wrap_azimuth, MicArray, Room, SourcePosition, Vec3};
pub use signal::{MultichannelFrame, Signal};

/// Default sample rate in Hz.
pub const DEFAULT_FS: f64 = 44_100.0;
/// Default speed of sound in m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;
/// Network input frame length in samples.
pub const FRAME_LEN: usize = 1024;
