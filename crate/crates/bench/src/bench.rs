//! Benchmark runs: every configured method over every SNR cell of a stored
//! dataset split, on identical noisy inputs.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use beamlab_core::dataset::{add_noise, Dataset, Record, Split};
use beamlab_core::doa::{srp_phat_azimuth, DoaGrid, Method, MusicConfig, MusicEstimator};
use beamlab_core::rir::Environment;
use beamlab_core::rng::{domain, stream_rng};
use beamlab_core::{angular_distance, classify_azimuth, MultichannelFrame};
use beamnet::{Head, InferenceSession, Model};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{angular_error_stats, classification_stats, ClassificationStats, ErrorStats};
use crate::{Error, Result};

fn test_split() -> Split {
    Split::Test
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub dataset: PathBuf,
    #[serde(default = "test_split")]
    pub split: Split,
    pub methods: Vec<Method>,
    /// Model file, required when `beamnet` is among the methods.
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Added-noise SNRs in dB; `null` evaluates the stored frames as they are.
    pub snrs_db: Vec<Option<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub max_examples: Option<usize>,
    /// Also score azimuth estimates as classes of this many partitions.
    /// A classification model always reports its own class count.
    #[serde(default)]
    pub n_classes: Option<usize>,
}

/// One output line: one example in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub example_id: u64,
    /// Empty for recordings without ground truth.
    pub theta_true: Option<f64>,
    pub theta_est: f64,
    pub abs_error: Option<f64>,
    pub method: String,
    pub snr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub method: Method,
    pub snr_db: Option<f64>,
    pub environment: String,
    pub n: usize,
    /// FNV-1a digest of every input frame of the cell, in example order.
    pub input_checksum: String,
    pub error_stats: Option<ErrorStats>,
    pub classification: Option<ClassificationStats>,
    /// Estimation time summed over examples, seconds.
    pub cpu_seconds: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRuntime {
    pub method: Method,
    pub sources: usize,
    pub total_seconds: f64,
    pub mean_ms_per_source: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub environment: String,
    pub split: Split,
    pub cells: Vec<CellReport>,
    pub runtimes: Vec<MethodRuntime>,
    #[serde(skip)]
    pub rows: Vec<Row>,
}

impl BenchReport {
    pub fn cell(&self, method: Method, snr_db: Option<f64>) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.method == method && c.snr_db == snr_db)
    }
}

pub fn snr_label(snr: Option<f64>) -> String {
    snr.map_or_else(|| "inf".to_string(), |s| format!("{s}"))
}

fn environment_name(env: &Environment) -> String {
    match env {
        Environment::FreeField => "free-field".into(),
        Environment::Room(r) => {
            let [x, y, z] = r.dims.0;
            format!("room-{x}x{y}x{z}")
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0100_0000_01b3;

fn fnv(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn frame_digest(f: &MultichannelFrame) -> u64 {
    f.data()
        .iter()
        .fold(FNV_OFFSET, |h, v| fnv(h, &v.to_bits().to_le_bytes()))
}

/// The input every method sees for `record` in SNR cell `snr_index`.
pub fn noisy_input(
    record: &Record,
    fs: f64,
    snr: Option<f64>,
    seed: u64,
    snr_index: usize,
) -> Result<MultichannelFrame> {
    let mut frame = record.to_frame(fs);
    if let Some(s) = snr {
        let mut rng = stream_rng(seed, domain::BENCH_NOISE, (record.id << 16) | snr_index as u64);
        add_noise(&mut frame, s, &mut rng)?;
    }
    Ok(frame)
}

enum Estimator {
    Music(Box<MusicEstimator>),
    Srp { grid: DoaGrid },
    Net(Box<Model<f32>>),
}

struct Outcome {
    theta: f64,
    class: Option<usize>,
    digest: u64,
    elapsed: Duration,
}

fn run_cell(
    est: &Estimator,
    records: &[Record],
    dataset: &Dataset,
    snr: Option<f64>,
    snr_index: usize,
    seed: u64,
) -> Result<Vec<Outcome>> {
    let m = &dataset.manifest;
    let frame_len = m.frame_len;
    records
        .par_iter()
        .map_init(
            || match est {
                Estimator::Net(model) => Some(InferenceSession::new((**model).clone())),
                _ => None,
            },
            |session, r| {
                let input = noisy_input(r, m.fs, snr, seed, snr_index)?;
                let digest = frame_digest(&input);
                let t0 = Instant::now();
                let (theta, class) = match (est, session) {
                    (Estimator::Music(e), _) => (e.estimate(&input)?.theta, None),
                    (Estimator::Srp { grid }, _) => (srp_phat_azimuth(&input, &m.array, grid, m.c)?.theta, None),
                    (Estimator::Net(model), Some(s)) => {
                        let frame = input.center_window(frame_len)?;
                        let est = s.infer(&frame)?;
                        let class = match model.spec().head {
                            Head::Classification { n_classes } => Some(classify_azimuth(est.theta, n_classes)?.0),
                            Head::Regression => None,
                        };
                        (est.theta, class)
                    }
                    (Estimator::Net(_), None) => unreachable!("sessions exist for network cells"),
                };
                let elapsed = t0.elapsed();
                if !theta.is_finite() {
                    return Err(Error::Numeric(format!("example {}: non-finite estimate", r.id)));
                }
                Ok(Outcome {
                    theta,
                    class,
                    digest,
                    elapsed,
                })
            },
        )
        .collect()
}

/// Runs every (method, SNR) cell. Failures inside a cell are recorded in
/// the report and the run moves on.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.methods.is_empty() || cfg.snrs_db.is_empty() {
        return Err(Error::Config("at least one method and one SNR are required".into()));
    }
    if cfg.snrs_db.iter().flatten().any(|s| !s.is_finite()) {
        return Err(Error::Config(
            "SNRs must be finite; use null for the stored frames".into(),
        ));
    }
    let dataset = Dataset::open(&cfg.dataset)?;
    let mut records = dataset.records(cfg.split)?;
    if let Some(n) = cfg.max_examples {
        records.truncate(n);
    }
    if records.is_empty() {
        return Err(Error::Data(format!("split `{}` is empty", cfg.split.name())));
    }
    let m = &dataset.manifest;
    let environment = environment_name(&m.environment);

    let mut rows = Vec::new();
    let mut cells = Vec::new();
    let mut runtimes = Vec::new();
    for &method in &cfg.methods {
        let est = match method {
            Method::Music => Estimator::Music(Box::new(MusicEstimator::new(
                &m.array,
                &DoaGrid::default(),
                m.fs,
                MusicConfig {
                    c: m.c,
                    ..MusicConfig::default()
                },
            )?)),
            Method::SrpPhat => Estimator::Srp {
                grid: DoaGrid::default(),
            },
            Method::Beamnet => {
                let path = cfg
                    .model
                    .as_ref()
                    .ok_or_else(|| Error::Config("method `beamnet` needs a model path".into()))?;
                let model = beamnet::load_model(path)?;
                let spec = model.spec();
                if spec.fs != m.fs || spec.n_channels != m.array.len() {
                    return Err(Error::Config(format!(
                        "model expects {} channels at {} Hz, dataset has {} at {} Hz",
                        spec.n_channels,
                        spec.fs,
                        m.array.len(),
                        m.fs
                    )));
                }
                Estimator::Net(Box::new(model))
            }
        };
        let n_classes = match &est {
            Estimator::Net(model) => match model.spec().head {
                Head::Classification { n_classes } => Some(n_classes),
                Head::Regression => cfg.n_classes,
            },
            _ => cfg.n_classes,
        };
        let mut total = Duration::ZERO;
        let mut sources = 0;
        for (snr_index, &snr) in cfg.snrs_db.iter().enumerate() {
            let mut cell = CellReport {
                method,
                snr_db: snr,
                environment: environment.clone(),
                n: records.len(),
                input_checksum: String::new(),
                error_stats: None,
                classification: None,
                cpu_seconds: 0.0,
                failure: None,
            };
            match run_cell(&est, &records, &dataset, snr, snr_index, cfg.seed) {
                Ok(out) => {
                    let digest = out.iter().fold(FNV_OFFSET, |h, o| fnv(h, &o.digest.to_le_bytes()));
                    cell.input_checksum = format!("{digest:016x}");
                    let elapsed: Duration = out.iter().map(|o| o.elapsed).sum();
                    cell.cpu_seconds = elapsed.as_secs_f64();
                    total += elapsed;
                    sources += out.len();
                    let truth: Vec<f64> = records.iter().map(|r| r.theta_true).collect();
                    let est_theta: Vec<f64> = out.iter().map(|o| o.theta).collect();
                    cell.error_stats = Some(angular_error_stats(&truth, &est_theta)?);
                    if let Some(n) = n_classes {
                        let classes = out
                            .iter()
                            .map(|o| match o.class {
                                Some(c) => Ok(c),
                                None => Ok(classify_azimuth(o.theta, n)?.0),
                            })
                            .collect::<Result<Vec<_>>>()?;
                        cell.classification = Some(classification_stats(&truth, &classes, n)?);
                    }
                    for (r, o) in records.iter().zip(&out) {
                        rows.push(Row {
                            example_id: r.id,
                            theta_true: Some(r.theta_true),
                            theta_est: o.theta,
                            abs_error: Some(angular_distance(r.theta_true, o.theta)),
                            method: method.name().to_string(),
                            snr: snr_label(snr),
                        });
                    }
                }
                Err(e) => cell.failure = Some(e.to_string()),
            }
            cells.push(cell);
        }
        runtimes.push(MethodRuntime {
            method,
            sources,
            total_seconds: total.as_secs_f64(),
            mean_ms_per_source: if sources > 0 {
                1e3 * total.as_secs_f64() / sources as f64
            } else {
                0.0
            },
        });
    }
    Ok(BenchReport {
        environment,
        split: cfg.split,
        cells,
        runtimes,
        rows,
    })
}

pub fn write_csv(rows: &[Row], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
