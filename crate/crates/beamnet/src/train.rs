//! Mini-batch training with Adam and an exponentially decaying learning
//! rate.

use beamlab_core::dataset::{add_noise, Dataset, Record, SnrPolicy, Split};
use beamlab_core::rng::{domain, stream_rng};
use beamlab_core::{angular_distance, MultichannelFrame};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::infer::decode;
use crate::model::{GradLayout, Tape};
use crate::{Error, Model, ModelSpec, Result, Scalar};

/// Examples per parallel work item. Gradients are summed inside a chunk and
/// then across chunks in index order, so the reduction never depends on the
/// number of worker threads.
const CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    /// Decay constant of the learning rate in iterations. `None` uses the
    /// total number of planned iterations.
    pub n_iteration: Option<usize>,
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Noise added to every training presentation, drawn afresh each epoch.
    pub augment: SnrPolicy,
    /// Maximum random shift of the training window away from the excerpt
    /// center, in samples. Validation always uses the centered window.
    pub max_shift: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            lr_max: 1e-3,
            lr_min: 1e-6,
            n_iteration: None,
            epochs: 150,
            adam: AdamConfig::default(),
            augment: SnrPolicy::Noiseless,
            max_shift: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_max > self.lr_min && self.lr_min > 0.0) {
            return Err(Error::Spec(format!(
                "learning rates must satisfy lr_max > lr_min > 0, got {} and {}",
                self.lr_max, self.lr_min
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Spec("batch size and epoch count must be positive".into()));
        }
        if self.n_iteration == Some(0) {
            return Err(Error::Spec("n_iteration must be positive".into()));
        }
        Ok(())
    }
}

/// Learning rate at iteration `k`: `lr_min + (lr_max - lr_min) exp(-k / n)`.
pub fn lr_schedule(k: usize, lr_max: f64, lr_min: f64, n_iteration: usize) -> f64 {
    lr_min + (lr_max - lr_min) * (-(k as f64) / n_iteration as f64).exp()
}

/// First and second moment estimates, kept in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Refuses non-finite gradients and leaves
/// both parameters and state untouched in that case.
pub fn adam_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != grads.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} state entries",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !Scalar::to_f64(*g).is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient entry {i} is {}",
            Scalar::to_f64(grads[i])
        )));
    }
    state.step += 1;
    let c1 = 1.0 - cfg.beta1.powf(state.step as f64);
    let c2 = 1.0 - cfg.beta2.powf(state.step as f64);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let g = Scalar::to_f64(*g);
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let step = lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
        *p = T::from_f64(Scalar::to_f64(*p) - step);
    }
    Ok(())
}

/// A stored excerpt and its label, ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: u64,
    pub theta: f64,
    pub n_channels: usize,
    pub n_samples: usize,
    /// Channel-major samples.
    pub data: Vec<f32>,
}

impl Example {
    pub fn from_record(r: &Record) -> Self {
        Self {
            id: r.id,
            theta: r.theta_true,
            n_channels: r.n_c,
            n_samples: r.n_t,
            data: r.data.clone(),
        }
    }

    /// `len` samples per channel starting `shift` samples away from the
    /// centered window.
    pub fn window(&self, len: usize, shift: isize) -> Vec<f32> {
        let start = ((self.n_samples - len) / 2) as isize + shift;
        let start = start.clamp(0, (self.n_samples - len) as isize) as usize;
        let mut out = Vec::with_capacity(self.n_channels * len);
        for c in 0..self.n_channels {
            let row = c * self.n_samples + start;
            out.extend_from_slice(&self.data[row..row + len]);
        }
        out
    }
}

/// Loss and median absolute azimuth error of a model over a set of
/// examples, using centered noiseless windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub median_abs_error: f64,
    pub mean_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the augmented presentations of this epoch.
    pub train_loss: f64,
    pub validation: Evaluation,
    /// Learning rate used for the last iteration of the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub initial_train: Evaluation,
    pub initial_validation: Evaluation,
    pub epochs: Vec<EpochRecord>,
    /// Evaluation of the returned (best) model on the training set.
    pub final_train: Evaluation,
    pub best_epoch: usize,
}

pub struct TrainOutcome {
    /// Parameters with the lowest validation loss.
    pub model: Model<f32>,
    pub history: History,
}

fn check_examples(spec: &ModelSpec, set: &[Example], what: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Shape(format!("{what} set is empty")));
    }
    for e in set {
        if e.n_channels != spec.n_channels || e.n_samples < spec.frame_len || e.data.len() != e.n_channels * e.n_samples
        {
            return Err(Error::Shape(format!(
                "{what} example {} is {}x{}, model expects {} channels and at least {} samples",
                e.id, e.n_channels, e.n_samples, spec.n_channels, spec.frame_len
            )));
        }
    }
    Ok(())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Evaluates `model` on the centered window of every example.
pub fn evaluate(model: &Model<f32>, set: &[Example]) -> Result<Evaluation> {
    let spec = model.spec();
    check_examples(spec, set, "evaluation")?;
    let t = spec.frame_len;
    let prep = model.prepare();
    let per: Vec<(f64, f64)> = set
        .par_iter()
        .map_init(
            || Tape::new(spec, t),
            |tape, e| {
                let tape = tape.as_mut().map_err(|err| Error::Shape(err.to_string()))?;
                model.forward_tape(&prep, &e.window(t, 0), tape);
                let (loss, _) = model.head_loss(&tape.out, e.theta)?;
                let est = decode(spec.head, &tape.out).theta;
                Ok((f64::from(loss), angular_distance(est, e.theta)))
            },
        )
        .collect::<Result<_>>()?;
    let loss = per.iter().map(|p| p.0).sum::<f64>() / per.len() as f64;
    let mut errs: Vec<f64> = per.iter().map(|p| p.1).collect();
    let mean_abs_error = errs.iter().sum::<f64>() / errs.len() as f64;
    Ok(Evaluation {
        loss,
        median_abs_error: median(&mut errs),
        mean_abs_error,
    })
}

/// Training input for one presentation: a possibly shifted window with
/// fresh augmentation noise.
fn presentation(e: &Example, t: usize, fs: f64, cfg: &TrainConfig, epoch: usize, index: usize) -> Result<Vec<f32>> {
    let mut rng = stream_rng(cfg.seed, domain::AUGMENT, ((epoch as u64) << 32) | index as u64);
    let shift = if cfg.max_shift > 0 {
        let m = cfg.max_shift as i64;
        rng.random_range(-m..=m) as isize
    } else {
        0
    };
    let x = e.window(t, shift);
    if cfg.augment == SnrPolicy::Noiseless {
        return Ok(x);
    }
    let snr = cfg.augment.draw(&mut rng);
    if snr == f64::INFINITY {
        return Ok(x);
    }
    let mut frame = MultichannelFrame::new(fs, e.n_channels, t, x.iter().map(|&v| f64::from(v)).collect())?;
    add_noise(&mut frame, snr, &mut rng)?;
    Ok(frame.data().iter().map(|&v| v as f32).collect())
}

/// Trains `model` on `train`, keeping the parameters with the lowest
/// validation loss. Bitwise reproducible for a fixed seed.
pub fn train(mut model: Model<f32>, train: &[Example], val: &[Example], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec = model.spec().clone();
    check_examples(&spec, train, "training")?;
    check_examples(&spec, val, "validation")?;
    let t = spec.frame_len;
    let batches_per_epoch = train.len().div_ceil(cfg.batch_size);
    let n_iteration = cfg.n_iteration.unwrap_or(batches_per_epoch * cfg.epochs);
    let gl = GradLayout::new(&spec);

    let initial_train = evaluate(&model, train)?;
    let initial_validation = evaluate(&model, val)?;
    let mut best = (initial_validation.loss, model.clone(), 0usize);
    let mut adam = AdamState::new(model.n_params());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut k = 0usize;
    let mut lr = cfg.lr_max;

    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream_rng(cfg.seed, domain::SHUFFLE, epoch as u64));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let prep = model.prepare();
            let m = &model;
            let parts: Vec<(f64, Vec<f32>)> = batch
                .par_chunks(CHUNK)
                .map_init(
                    || (Tape::new(&spec, t), vec![0f32; gl.len]),
                    |(tape, g), chunk| {
                        let tape = tape.as_mut().map_err(|err| Error::Shape(err.to_string()))?;
                        g.fill(0.0);
                        let mut loss = 0.0;
                        for &i in chunk {
                            let x = presentation(&train[i], t, spec.fs, cfg, epoch, i)?;
                            m.forward_tape(&prep, &x, tape);
                            let (l, dout) = m.head_loss(&tape.out, train[i].theta)?;
                            m.backward_tape(&prep, tape, &dout, g, &gl);
                            loss += f64::from(l);
                        }
                        Ok((loss, g.clone()))
                    },
                )
                .collect::<Result<_>>()?;
            let mut g = vec![0f32; gl.len];
            let mut batch_loss = 0.0;
            for (l, part) in &parts {
                batch_loss += l;
                for (a, b) in g.iter_mut().zip(part) {
                    *a += *b;
                }
            }
            let scale = 1.0 / batch.len() as f32;
            g.iter_mut().for_each(|v| *v *= scale);
            lr = lr_schedule(k, cfg.lr_max, cfg.lr_min, n_iteration);
            let grad = model.unfold_grad(&g, &gl);
            if !batch_loss.is_finite() || adam_step(model.params_mut(), &grad, &mut adam, lr, &cfg.adam).is_err() {
                return Err(Error::Diverged {
                    iteration: k,
                    checkpoint: Box::new(best.1),
                });
            }
            loss_sum += batch_loss;
            k += 1;
        }
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                iteration: k,
                checkpoint: Box::new(best.1),
            });
        }
        let validation = evaluate(&model, val)?;
        if validation.loss < best.0 {
            best = (validation.loss, model.clone(), epoch);
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            validation,
            lr,
        });
    }
    let (_, model, best_epoch) = best;
    let final_train = evaluate(&model, train)?;
    Ok(TrainOutcome {
        model,
        history: History {
            initial_train,
            initial_validation,
            epochs,
            final_train,
            best_epoch,
        },
    })
}

/// Loads the train and validation splits of a dataset written by the
/// dataset builder.
pub fn load_splits(dataset: &Dataset, spec: &ModelSpec) -> Result<(Vec<Example>, Vec<Example>)> {
    let m = &dataset.manifest;
    if m.fs != spec.fs {
        return Err(Error::Spec(format!(
            "dataset is sampled at {} Hz, model at {} Hz",
            m.fs, spec.fs
        )));
    }
    if m.array.len() != spec.n_channels {
        return Err(Error::Spec(format!(
            "dataset has {} channels, model expects {}",
            m.array.len(),
            spec.n_channels
        )));
    }
    let load = |s| -> Result<Vec<Example>> { Ok(dataset.records(s)?.iter().map(Example::from_record).collect()) };
    Ok((load(Split::Train)?, load(Split::Val)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(lr_schedule(0, 1e-3, 1e-6, 500), 1e-3);
        let at_n = lr_schedule(500, 1e-3, 1e-6, 500);
        assert!((at_n - (1e-6 + (1e-3 - 1e-6) * (-1f64).exp())).abs() < 1e-15);
        assert!((at_n - 3.686e-4).abs() < 1e-7);
        assert!((lr_schedule(1_000_000, 1e-3, 1e-6, 500) - 1e-6).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = vec![0.3f64, -1.2, 4.0];
        let before = p.clone();
        let mut s = AdamState::new(3);
        for _ in 0..5 {
            adam_step(&mut p, &[0.0; 3], &mut s, 1e-3, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_is_sign_scaled() {
        let g = [2.5f64, -1e-3, 40.0];
        let mut p = vec![0.0; 3];
        let mut s = AdamState::new(3);
        adam_step(&mut p, &g, &mut s, 1e-3, &AdamConfig::default()).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            assert!((pi + 1e-3 * gi.signum()).abs() < 1e-8, "{pi}");
        }
    }

    #[test]
    fn adam_steady_state_step_is_the_learning_rate() {
        let mut p = vec![0.0f64];
        let mut s = AdamState::new(1);
        let mut last = 0.0;
        for _ in 0..5000 {
            let before = p[0];
            adam_step(&mut p, &[0.7], &mut s, 1e-3, &AdamConfig::default()).unwrap();
            last = before - p[0];
        }
        assert!((last - 1e-3).abs() < 1e-9, "{last}");
    }

    #[test]
    fn adam_rejects_nan() {
        let mut p = vec![1.0f32, 2.0];
        let mut s = AdamState::new(2);
        let err = adam_step(&mut p, &[0.1, f32::NAN], &mut s, 1e-3, &AdamConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn window_is_centered_and_clamped() {
        let e = Example {
            id: 0,
            theta: 0.0,
            n_channels: 2,
            n_samples: 10,
            data: (0..20).map(|v| v as f32).collect(),
        };
        assert_eq!(e.window(4, 0), vec![3.0, 4.0, 5.0, 6.0, 13.0, 14.0, 15.0, 16.0]);
        assert_eq!(e.window(4, -100)[..4], [0.0, 1.0, 2.0, 3.0]);
        assert_eq!(e.window(4, 100)[..4], [6.0, 7.0, 8.0, 9.0]);
    }
}
