use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rir::{convolve, source_rir, Environment, Rir, RirConfig};
use crate::{classify_azimuth, Error, MicArray, MultichannelFrame, Result, Signal, SourcePosition};

/// Random window draws tried before falling back to a linear scan.
const WINDOW_TRIES: usize = 32;
const SCAN_STEP: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub rir: RirConfig,
    /// Network frame length.
    pub frame_len: usize,
    /// Stored excerpt length; the network frame is its centered window.
    pub excerpt_len: usize,
    /// Minimum frame RMS relative to the utterance RMS.
    pub rms_threshold: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            rir: RirConfig::default(),
            frame_len: crate::FRAME_LEN,
            excerpt_len: 8192,
            rms_threshold: 0.1,
        }
    }
}

/// A rendered multichannel excerpt and its direction-of-arrival label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub id: u64,
    pub excerpt: MultichannelFrame,
    pub frame_len: usize,
    pub theta_true: f64,
    pub position: SourcePosition,
    pub signal_id: String,
    pub snr_db: f64,
}

impl LabeledExample {
    /// Centered `frame_len` window of the excerpt.
    pub fn frame(&self) -> MultichannelFrame {
        self.excerpt
            .center_window(self.frame_len)
            .expect("excerpt holds the frame")
    }

    /// Unit-circle projection `(cos theta, sin theta)`.
    pub fn label_reg(&self) -> [f64; 2] {
        unit_label(self.theta_true)
    }

    pub fn label_class(&self, n: usize) -> Result<usize> {
        classify_azimuth(self.theta_true, n).map(|(i, _)| i)
    }
}

pub fn unit_label(theta: f64) -> [f64; 2] {
    let (s, c) = theta.to_radians().sin_cos();
    [c, s]
}

fn frame_power(y: &MultichannelFrame, start: usize, len: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..y.n_channels() {
        acc += y.channel(c)[start..start + len].iter().map(|v| v * v).sum::<f64>();
    }
    acc / (len * y.n_channels()) as f64
}

/// Renders `signal` emitted from `pos` through the environment and picks an
/// excerpt whose centered network frame carries at least `rms_threshold`
/// of the utterance RMS.
pub fn render_example<R: Rng + ?Sized>(
    pos: &SourcePosition,
    signal: &Signal,
    signal_id: &str,
    env: &Environment,
    array: &MicArray,
    cfg: &RenderConfig,
    rng: &mut R,
) -> Result<LabeledExample> {
    let rir = source_rir(env, pos, array, &cfg.rir)?;
    render_with_rir(pos, &rir, signal, signal_id, cfg, rng)
}

pub fn render_with_rir<R: Rng + ?Sized>(
    pos: &SourcePosition,
    rir: &Rir,
    signal: &Signal,
    signal_id: &str,
    cfg: &RenderConfig,
    rng: &mut R,
) -> Result<LabeledExample> {
    if cfg.excerpt_len < cfg.frame_len {
        return Err(Error::InvalidArgument("excerpt shorter than the network frame".into()));
    }
    let needed = rir.len() + cfg.excerpt_len;
    if signal.len() <= needed {
        return Err(Error::SignalTooShort {
            needed: needed + 1,
            have: signal.len(),
        });
    }
    let y = convolve(signal, rir)?;
    // excerpts lie where the RIR fully overlaps the signal
    let lo = rir.len() - 1;
    let hi = signal.len() - cfg.excerpt_len;
    let utterance = frame_power(&y, lo, signal.len() - lo);
    let threshold = cfg.rms_threshold * cfg.rms_threshold * utterance;
    let offset = (cfg.excerpt_len - cfg.frame_len) / 2;
    let qualifies = |s: usize| utterance > 0.0 && frame_power(&y, s + offset, cfg.frame_len) >= threshold;

    let mut start = None;
    for _ in 0..WINDOW_TRIES {
        let s = rng.random_range(lo..=hi);
        if qualifies(s) {
            start = Some(s);
            break;
        }
    }
    if start.is_none() {
        start = (lo..=hi).step_by(SCAN_STEP).find(|&s| qualifies(s));
    }
    let start = start.ok_or_else(|| Error::SilentSignal(signal_id.to_string()))?;
    Ok(LabeledExample {
        id: 0,
        excerpt: y.window(start, cfg.excerpt_len)?,
        frame_len: cfg.frame_len,
        theta_true: pos.theta,
        position: *pos,
        signal_id: signal_id.to_string(),
        snr_db: f64::INFINITY,
    })
}
