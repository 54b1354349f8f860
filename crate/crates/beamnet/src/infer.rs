use std::time::{Duration, Instant};

use beamlab_core::doa::{DoaEstimate, Method};
use beamlab_core::MultichannelFrame;

use crate::fast::{Buffers, FastModel};
use crate::ops::regression_azimuth;
use crate::{Error, Head, Model, NdArray, Result};

/// A frozen single-precision model with its transformed kernels and
/// activation buffers kept between calls.
pub struct InferenceSession {
    model: Model<f32>,
    fast: FastModel,
    buffers: Option<Buffers>,
    input: Vec<f32>,
    last_latency: Duration,
}

impl InferenceSession {
    pub fn new(model: Model<f32>) -> Self {
        Self {
            fast: FastModel::new(&model),
            model,
            buffers: None,
            input: Vec::new(),
            last_latency: Duration::ZERO,
        }
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    /// Wall-clock time of the most recent [`Self::infer`] call.
    pub fn last_latency(&self) -> Duration {
        self.last_latency
    }

    /// Raw head output for a channel-major `n_channels x t` input.
    pub fn outputs(&mut self, x: &[f32], t: usize) -> Result<&[f32]> {
        let spec = self.model.spec();
        if x.len() != spec.n_channels * t {
            return Err(Error::Shape(format!(
                "input has {} values, expected {} channels x {t}",
                x.len(),
                spec.n_channels
            )));
        }
        if self.buffers.as_ref().is_none_or(|b| b.frame_len() != t) {
            self.buffers = Some(Buffers::new(spec, t)?);
        }
        let buffers = self.buffers.as_mut().expect("allocated above");
        self.fast.forward(x, buffers);
        Ok(&buffers.out)
    }

    /// Head outputs `[batch, n_outputs]` for `batch` stacked inputs; each
    /// row is computed exactly as a single-example call would.
    pub fn outputs_batch(&mut self, x: &[f32], batch: usize, t: usize) -> Result<NdArray<f32>> {
        let per = self.model.spec().n_channels * t;
        if x.len() != batch * per {
            return Err(Error::Shape(format!(
                "batch of {batch} needs {} values, got {}",
                batch * per,
                x.len()
            )));
        }
        let n_out = self.model.spec().head.n_outputs();
        let mut out = Vec::with_capacity(batch * n_out);
        for ex in x.chunks_exact(per) {
            out.extend_from_slice(self.outputs(ex, t)?);
        }
        NdArray::new(&[batch, n_out], out)
    }

    pub fn infer(&mut self, frame: &MultichannelFrame) -> Result<DoaEstimate> {
        let start = Instant::now();
        let spec = self.model.spec();
        if frame.n_channels() != spec.n_channels || frame.n_samples() != spec.frame_len {
            return Err(Error::Shape(format!(
                "frame is {} x {}, model expects {} x {}",
                frame.n_channels(),
                frame.n_samples(),
                spec.n_channels,
                spec.frame_len
            )));
        }
        if (frame.fs - spec.fs).abs() > 1e-9 * spec.fs {
            return Err(Error::Shape(format!(
                "frame is sampled at {} Hz, model at {} Hz",
                frame.fs, spec.fs
            )));
        }
        let t = spec.frame_len;
        let head = spec.head;
        let mut input = std::mem::take(&mut self.input);
        input.clear();
        input.extend(frame.data().iter().map(|&v| v as f32));
        let out = self.outputs(&input, t)?;
        let est = decode(head, out);
        self.input = input;
        self.last_latency = start.elapsed();
        Ok(est)
    }
}

/// Azimuth and confidence from a head output. Regression confidence is the
/// length of the predicted vector, classification confidence the winning
/// softmax probability.
pub fn decode(head: Head, out: &[f32]) -> DoaEstimate {
    let (theta, confidence) = match head {
        Head::Regression => {
            let (x, y) = (f64::from(out[0]), f64::from(out[1]));
            (regression_azimuth(x, y), x.hypot(y))
        }
        Head::Classification { n_classes } => {
            let mut best = 0;
            for (i, v) in out.iter().enumerate() {
                if *v > out[best] {
                    best = i;
                }
            }
            let max = f64::from(out[best]);
            let sum: f64 = out.iter().map(|v| (f64::from(*v) - max).exp()).sum();
            ((best as f64 + 0.5) * 360.0 / n_classes as f64 - 180.0, 1.0 / sum)
        }
    };
    DoaEstimate {
        theta,
        method: Method::Beamnet,
        confidence,
        low_confidence: !confidence.is_finite(),
    }
}

/// One-shot inference; prefer [`InferenceSession`] for streams of frames.
pub fn infer_doa(model: &Model<f32>, frame: &MultichannelFrame) -> Result<DoaEstimate> {
    InferenceSession::new(model.clone()).infer(frame)
}
