//! Dataset container: `manifest.json`, one binary shard per split and a
//! JSON-lines metadata file per split.
//!
//! Shard record layout, little-endian: `id: u64, theta_true: f64, snr: f64,
//! n_c: u16, n_t: u16`, then `n_c * n_t` f32 samples, channel-major.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bank::{SignalBank, SignalSource};
use super::render::{render_example, LabeledExample, RenderConfig};
use super::snr::{add_noise, SnrPolicy};
use super::torus::{sample_torus, TorusSpec};
use crate::rir::Environment;
use crate::rng::{domain, stream_rng};
use crate::{Error, MicArray, MultichannelFrame, Result, SourcePosition};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;
const RECORD_HEADER: usize = 8 + 8 + 8 + 2 + 2;
/// Examples rendered per parallel batch before being flushed to disk.
const RENDER_CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn shard_file(&self) -> String {
        format!("{}.bin", self.name())
    }

    pub fn meta_file(&self) -> String {
        format!("{}.meta.jsonl", self.name())
    }
}

/// 80:10:10 split sizes; the test split absorbs rounding.
pub fn split_counts(n: usize) -> [usize; 3] {
    let train = (n as f64 * 0.8).round() as usize;
    let val = ((n as f64 * 0.1).round() as usize).min(n - train);
    [train, val, n - train - val]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_examples: usize,
    #[serde(default)]
    pub torus: TorusSpec,
    pub environment: Environment,
    #[serde(default = "MicArray::uma8")]
    pub array: MicArray,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default = "noiseless")]
    pub snr: SnrPolicy,
    pub signals: SignalSource,
}

fn noiseless() -> SnrPolicy {
    SnrPolicy::Noiseless
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub counts: SplitCounts,
    pub torus: TorusSpec,
    pub environment: Environment,
    pub array: MicArray,
    pub fs: f64,
    pub c: f64,
    pub frame_len: usize,
    pub excerpt_len: usize,
    pub snr: SnrPolicy,
    pub seed: u64,
    pub signals: Vec<String>,
}

impl DatasetManifest {
    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.counts.train,
            Split::Val => self.counts.val,
            Split::Test => self.counts.test,
        }
    }
}

/// Per-example metadata stored next to the shards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub id: u64,
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
    pub signal_id: String,
    pub snr_db: Option<f64>,
}

/// One stored example.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: u64,
    pub theta_true: f64,
    pub snr_db: f64,
    pub n_c: usize,
    pub n_t: usize,
    pub data: Vec<f32>,
}

impl Record {
    pub fn from_example(ex: &LabeledExample) -> Self {
        Self {
            id: ex.id,
            theta_true: ex.theta_true,
            snr_db: ex.snr_db,
            n_c: ex.excerpt.n_channels(),
            n_t: ex.excerpt.n_samples(),
            data: ex.excerpt.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_frame(&self, fs: f64) -> MultichannelFrame {
        MultichannelFrame::new(
            fs,
            self.n_c,
            self.n_t,
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("record shape is consistent")
    }

    /// Centered `len`-sample window as f32, channel-major.
    pub fn center_window(&self, len: usize) -> Vec<f32> {
        let start = (self.n_t - len) / 2;
        let mut out = Vec::with_capacity(self.n_c * len);
        for c in 0..self.n_c {
            out.extend_from_slice(&self.data[c * self.n_t + start..c * self.n_t + start + len]);
        }
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&self.id.to_le_bytes())?;
        w.write_all(&self.theta_true.to_le_bytes())?;
        w.write_all(&self.snr_db.to_le_bytes())?;
        w.write_all(&(self.n_c as u16).to_le_bytes())?;
        w.write_all(&(self.n_t as u16).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }
}

/// Parses every record of a shard.
pub fn read_shard(path: &Path) -> Result<Vec<Record>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let corrupt = |reason: String| Error::CorruptDataset {
        path: path.to_path_buf(),
        reason,
    };
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        if bytes.len() - pos < RECORD_HEADER {
            return Err(corrupt(format!("truncated record header at byte {pos}")));
        }
        let h = &bytes[pos..pos + RECORD_HEADER];
        let id = u64::from_le_bytes(h[0..8].try_into().unwrap());
        let theta_true = f64::from_le_bytes(h[8..16].try_into().unwrap());
        let snr_db = f64::from_le_bytes(h[16..24].try_into().unwrap());
        let n_c = u16::from_le_bytes(h[24..26].try_into().unwrap()) as usize;
        let n_t = u16::from_le_bytes(h[26..28].try_into().unwrap()) as usize;
        pos += RECORD_HEADER;
        let n_bytes = n_c * n_t * 4;
        if bytes.len() - pos < n_bytes {
            return Err(corrupt(format!("record {id} truncated")));
        }
        let data = bytes[pos..pos + n_bytes]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        pos += n_bytes;
        out.push(Record {
            id,
            theta_true,
            snr_db,
            n_c,
            n_t,
            data,
        });
    }
    Ok(out)
}

/// An opened dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::CorruptDataset {
                path,
                reason: format!("unsupported format version {}", manifest.format_version),
            });
        }
        Ok(Self { dir, manifest })
    }

    pub fn records(&self, split: Split) -> Result<Vec<Record>> {
        let path = self.dir.join(split.shard_file());
        let recs = read_shard(&path)?;
        if recs.len() != self.manifest.count(split) {
            return Err(Error::CorruptDataset {
                path,
                reason: format!("expected {} records, found {}", self.manifest.count(split), recs.len()),
            });
        }
        Ok(recs)
    }

    pub fn meta(&self, split: Split) -> Result<Vec<ExampleMeta>> {
        let path = self.dir.join(split.meta_file());
        let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        BufReader::new(f)
            .lines()
            .map(|l| {
                let l = l.map_err(|e| Error::io(&path, e))?;
                Ok(serde_json::from_str(&l)?)
            })
            .collect()
    }
}

/// Renders example `index` of a dataset. Deterministic in `(seed, index)`.
pub fn render_indexed(cfg: &DatasetConfig, bank: &SignalBank, seed: u64, index: usize) -> Result<LabeledExample> {
    let mut rng = stream_rng(seed, domain::RENDER, index as u64);
    let pos: SourcePosition = sample_torus(&cfg.torus, &mut rng);
    let entry = &bank.entries[rand::Rng::random_range(&mut rng, 0..bank.len())];
    let mut ex = render_example(
        &pos,
        &entry.signal,
        &entry.id,
        &cfg.environment,
        &cfg.array,
        &cfg.render,
        &mut rng,
    )?;
    ex.id = index as u64;
    let mut noise_rng = stream_rng(seed, domain::NOISE, index as u64);
    let snr = cfg.snr.draw(&mut noise_rng);
    add_noise(&mut ex.excerpt, snr, &mut noise_rng)?;
    ex.snr_db = snr;
    Ok(ex)
}

/// Renders `cfg.n_examples` examples and writes the dataset to `out`.
pub fn build_dataset(cfg: &DatasetConfig, out: &Path, seed: u64) -> Result<DatasetManifest> {
    cfg.torus.validate()?;
    if let Environment::Room(room) = &cfg.environment {
        room.validate()?;
    }
    if cfg.render.excerpt_len > u16::MAX as usize || cfg.array.len() > u16::MAX as usize {
        return Err(Error::InvalidArgument(
            "excerpt or channel count exceeds the u16 record header".into(),
        ));
    }
    let fs = cfg.render.rir.fs;
    let bank = SignalBank::load(&cfg.signals, fs, seed)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let counts = split_counts(cfg.n_examples);
    let mut index = 0usize;
    for (split, &count) in Split::ALL.iter().zip(&counts) {
        let shard_path = out.join(split.shard_file());
        let meta_path = out.join(split.meta_file());
        let mut shard = BufWriter::new(File::create(&shard_path).map_err(|e| Error::io(&shard_path, e))?);
        let mut meta = BufWriter::new(File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?);
        let end = index + count;
        while index < end {
            let chunk_end = (index + RENDER_CHUNK).min(end);
            let examples: Vec<LabeledExample> = (index..chunk_end)
                .into_par_iter()
                .map(|i| render_indexed(cfg, &bank, seed, i))
                .collect::<Result<_>>()?;
            for ex in &examples {
                Record::from_example(ex)
                    .write_to(&mut shard)
                    .map_err(|e| Error::io(&shard_path, e))?;
                let m = ExampleMeta {
                    id: ex.id,
                    r: ex.position.r,
                    theta: ex.position.theta,
                    phi: ex.position.phi,
                    signal_id: ex.signal_id.clone(),
                    snr_db: ex.snr_db.is_finite().then_some(ex.snr_db),
                };
                writeln!(meta, "{}", serde_json::to_string(&m)?).map_err(|e| Error::io(&meta_path, e))?;
            }
            index = chunk_end;
        }
        shard.flush().map_err(|e| Error::io(&shard_path, e))?;
        meta.flush().map_err(|e| Error::io(&meta_path, e))?;
    }

    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        counts: SplitCounts {
            train: counts[0],
            val: counts[1],
            test: counts[2],
        },
        torus: cfg.torus,
        environment: cfg.environment.clone(),
        array: cfg.array.clone(),
        fs,
        c: cfg.render.rir.c,
        frame_len: cfg.render.frame_len,
        excerpt_len: cfg.render.excerpt_len,
        snr: cfg.snr,
        seed,
        signals: bank.ids(),
    };
    let path = out.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
