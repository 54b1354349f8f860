use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, MultichannelFrame, Result};

/// Upper bound of the random SNR draws, in dB.
pub const AUGMENT_MAX_SNR_DB: f64 = 60.0;
/// Probability that an augment-random draw leaves the frame noiseless.
pub const AUGMENT_NOISELESS_PROB: f64 = 0.1;

/// How additive sensor noise is applied to a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SnrPolicy {
    /// SNR uniform in `[x_min, 60]` dB, or noiseless with probability 0.1.
    AugmentRandom {
        x_min: f64,
    },
    Fixed {
        snr_db: f64,
    },
    Noiseless,
}

impl SnrPolicy {
    /// Draws the SNR in dB for one presentation; `+inf` means noiseless.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SnrPolicy::Noiseless => f64::INFINITY,
            SnrPolicy::Fixed { snr_db } => snr_db,
            SnrPolicy::AugmentRandom { x_min } => {
                let u: f64 = rng.random();
                if u < AUGMENT_NOISELESS_PROB {
                    f64::INFINITY
                } else {
                    rng.random_range(x_min..=AUGMENT_MAX_SNR_DB.max(x_min))
                }
            }
        }
    }
}

/// Adds white Gaussian noise at `snr_db` relative to the mean power of the
/// whole frame. The noise realization is rescaled so the achieved SNR is
/// exact. Infinite SNR returns the frame untouched.
pub fn add_noise<R: Rng + ?Sized>(frame: &mut MultichannelFrame, snr_db: f64, rng: &mut R) -> Result<()> {
    if snr_db == f64::INFINITY {
        return Ok(());
    }
    if snr_db.is_nan() {
        return Err(Error::InvalidArgument("SNR is NaN".into()));
    }
    let p_signal = frame.power();
    if !(p_signal > 0.0) {
        return Err(Error::ZeroPower);
    }
    let noise: Vec<f64> = (0..frame.data().len()).map(|_| StandardNormal.sample(rng)).collect();
    let p_noise_raw = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
    let target = p_signal / 10f64.powf(snr_db / 10.0);
    let gain = (target / p_noise_raw).sqrt();
    for (x, n) in frame.data_mut().iter_mut().zip(&noise) {
        *x += gain * n;
    }
    Ok(())
}

/// Draws an SNR from `policy` and applies it. Returns the noisy frame and
/// the SNR used.
pub fn augment_snr<R: Rng + ?Sized>(
    frame: &MultichannelFrame,
    policy: &SnrPolicy,
    rng: &mut R,
) -> Result<(MultichannelFrame, f64)> {
    let snr = policy.draw(rng);
    let mut out = frame.clone();
    add_noise(&mut out, snr, rng)?;
    Ok((out, snr))
}
