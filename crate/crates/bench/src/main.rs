use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beamlab::bench::{snr_label, Row};
use beamlab::report::write_report;
use beamlab::{run_benchmark, write_csv, BenchConfig, BenchReport, Error, Result};
use beamlab_core::dataset::{build_dataset, Dataset, DatasetConfig, Split};
use beamlab_core::doa::{srp_phat_azimuth, DoaGrid, Method, MusicConfig, MusicEstimator, EXCERPT_LEN};
use beamlab_core::rir::{export_rir, source_rir, Environment, RirConfig, RirSidecar};
use beamlab_core::{MicArray, MultichannelFrame, SourcePosition};
use beamnet::train::load_splits;
use beamnet::{Head, InferenceSession, Model, ModelSpec, TrainConfig};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "beamlab", version, about = "Microphone-array direction-of-arrival workbench")]
struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON configuration of the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Music,
    SrpPhat,
    Beamnet,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Music => Method::Music,
            MethodArg::SrpPhat => Method::SrpPhat,
            MethodArg::Beamnet => Method::Beamnet,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute room impulse responses and export them as WAV + JSON.
    SimulateRir {
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a labeled dataset.
    MakeDataset {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate directions for a recording or a dataset split.
    Locate {
        #[arg(long, value_enum)]
        method: MethodArg,
        /// A multichannel WAV file or a dataset directory.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run a benchmark; writes results.csv, summary.json and a report.
    Bench {
        #[arg(long)]
        out: PathBuf,
    },
    /// Tables and polar plots from a benchmark summary.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_config<T: for<'de> Deserialize<'de>>(path: Option<&Path>) -> Result<T> {
    let path = path.ok_or_else(|| Error::Config("--config <json> is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn default_array() -> MicArray {
    MicArray::uma8()
}

#[derive(Deserialize)]
struct SimulateConfig {
    environment: Environment,
    #[serde(default = "default_array")]
    array: MicArray,
    #[serde(default)]
    rir: RirConfig,
    sources: Vec<SourcePosition>,
}

fn simulate_rir(cfg: &SimulateConfig, out: &Path) -> Result<()> {
    for (i, src) in cfg.sources.iter().enumerate() {
        let rir = source_rir(&cfg.environment, src, &cfg.array, &cfg.rir)?;
        let room = match &cfg.environment {
            Environment::Room(r) => Some(r),
            Environment::FreeField => None,
        };
        let sidecar = RirSidecar {
            room_dims: room.map(|r| r.dims),
            absorption: room.map(|r| r.absorption),
            array_origin: room.map(|r| r.array_origin),
            source: *src,
            fs: cfg.rir.fs,
            c: cfg.rir.c,
            image_count: rir.image_count,
        };
        export_rir(out, &format!("rir_{i:04}"), &rir, &sidecar)?;
        println!("rir_{i:04}: {} taps, {} images", rir.len(), rir.image_count);
    }
    Ok(())
}

fn default_n_f() -> usize {
    128
}

fn default_true() -> bool {
    true
}

#[derive(Deserialize)]
struct ModelOptions {
    #[serde(default = "default_n_f")]
    n_f: usize,
    head: Head,
    #[serde(default = "default_true")]
    cross_bank_skips: bool,
}

#[derive(Deserialize)]
struct TrainFile {
    model: ModelOptions,
    #[serde(default)]
    train: TrainConfig,
}

fn train(cfg: TrainFile, seed: Option<u64>, dataset: &Path, out: &Path) -> Result<()> {
    let ds = Dataset::open(dataset)?;
    let mut spec = ModelSpec::with_channels(cfg.model.n_f, cfg.model.head);
    spec.cross_bank_skips = cfg.model.cross_bank_skips;
    spec.n_channels = ds.manifest.array.len();
    spec.fs = ds.manifest.fs;
    spec.frame_len = ds.manifest.frame_len;
    let mut tc = cfg.train;
    if let Some(s) = seed {
        tc.seed = s;
    }
    let (tr, va) = load_splits(&ds, &spec)?;
    let model = Model::init(spec, tc.seed)?;
    println!(
        "{} parameters, {} training and {} validation examples",
        model.n_params(),
        tr.len(),
        va.len()
    );
    let outcome = beamnet::train(model, &tr, &va, &tc)?;
    for e in &outcome.history.epochs {
        println!(
            "epoch {:3}  train loss {:.5}  val loss {:.5}  val median {:.2}°",
            e.epoch, e.train_loss, e.validation.loss, e.validation.median_abs_error
        );
    }
    beamnet::save_model(&outcome.model, out)?;
    let hist = out.with_extension("history.json");
    std::fs::write(&hist, serde_json::to_string_pretty(&outcome.history)?)?;
    println!(
        "best epoch {}; model written to {}",
        outcome.history.best_epoch,
        out.display()
    );
    Ok(())
}

fn locate_wav(method: Method, input: &Path, model: Option<&Path>, out: &Path) -> Result<()> {
    let rec = beamlab_core::wav::read_wav(input)?;
    let window = EXCERPT_LEN.min(rec.n_samples());
    let mut rows = Vec::new();
    let mut session = match method {
        Method::Beamnet => {
            let path = model.ok_or_else(|| Error::Config("--model is required for beamnet".into()))?;
            Some(InferenceSession::new(beamnet::load_model(path)?))
        }
        _ => None,
    };
    let array = default_array_for(&rec)?;
    let music = match method {
        Method::Music => Some(MusicEstimator::new(
            &array,
            &DoaGrid::default(),
            rec.fs,
            MusicConfig::default(),
        )?),
        _ => None,
    };
    let grid = DoaGrid::default();
    for (i, start) in (0..=rec.n_samples() - window).step_by(window).enumerate() {
        let frame: MultichannelFrame = rec.window(start, window)?;
        let theta = match method {
            Method::Music => music.as_ref().expect("built above").estimate(&frame)?.theta,
            Method::SrpPhat => srp_phat_azimuth(&frame, &array, &grid, beamlab_core::SPEED_OF_SOUND)?.theta,
            Method::Beamnet => {
                let s = session.as_mut().expect("built above");
                let len = s.model().spec().frame_len;
                s.infer(&frame.center_window(len)?)?.theta
            }
        };
        rows.push(Row {
            example_id: i as u64,
            theta_true: None,
            theta_est: theta,
            abs_error: None,
            method: method.name().into(),
            snr: String::new(),
        });
    }
    write_csv(&rows, out)?;
    println!("{} windows located", rows.len());
    Ok(())
}

fn default_array_for(rec: &MultichannelFrame) -> Result<MicArray> {
    let a = MicArray::uma8();
    if rec.n_channels() != a.len() {
        return Err(Error::Data(format!(
            "recording has {} channels; the default array has {}",
            rec.n_channels(),
            a.len()
        )));
    }
    Ok(a)
}

fn locate(method: Method, input: &Path, model: Option<PathBuf>, out: &Path, seed: u64) -> Result<()> {
    if input.is_dir() {
        let cfg = BenchConfig {
            dataset: input.to_path_buf(),
            split: Split::Test,
            methods: vec![method],
            model,
            snrs_db: vec![None],
            seed,
            max_examples: None,
            n_classes: None,
        };
        let report = run_benchmark(&cfg)?;
        fail_on_cells(&report)?;
        write_csv(&report.rows, out)?;
        println!("{} examples located", report.rows.len());
        Ok(())
    } else {
        locate_wav(method, input, model.as_deref(), out)
    }
}

fn fail_on_cells(report: &BenchReport) -> Result<()> {
    match report.cells.iter().find_map(|c| c.failure.as_ref()) {
        Some(f) => Err(Error::Data(f.clone())),
        None => Ok(()),
    }
}

fn bench(mut cfg: BenchConfig, seed: Option<u64>, out: &Path) -> Result<()> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = run_benchmark(&cfg)?;
    std::fs::create_dir_all(out)?;
    write_csv(&report.rows, &out.join("results.csv"))?;
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&report)?)?;
    write_report(&report, out)?;
    for c in &report.cells {
        match (&c.error_stats, &c.failure) {
            (Some(e), _) => println!(
                "{:9} SNR {:>4}: mean {:.2}°  median {:.2}°",
                c.method.name(),
                snr_label(c.snr_db),
                e.mean_abs,
                e.median
            ),
            (None, Some(f)) => println!("{:9} SNR {:>4}: failed ({f})", c.method.name(), snr_label(c.snr_db)),
            (None, None) => {}
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let config = cli.config.as_deref();
    match cli.command {
        Command::SimulateRir { out } => simulate_rir(&read_config(config)?, &out),
        Command::MakeDataset { out } => {
            let cfg: DatasetConfig = read_config(config)?;
            let m = build_dataset(&cfg, &out, cli.seed.unwrap_or(0))?;
            println!(
                "{} train, {} val, {} test examples written to {}",
                m.counts.train,
                m.counts.val,
                m.counts.test,
                out.display()
            );
            Ok(())
        }
        Command::Train { dataset, out } => train(read_config(config)?, cli.seed, &dataset, &out),
        Command::Locate {
            method,
            input,
            out,
            model,
        } => locate(method.into(), &input, model, &out, cli.seed.unwrap_or(0)),
        Command::Bench { out } => bench(read_config(config)?, cli.seed, &out),
        Command::Report { input, out } => {
            let text = std::fs::read_to_string(&input)?;
            let report: BenchReport = serde_json::from_str(&text).map_err(|e| Error::Data(e.to_string()))?;
            for p in write_report(&report, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
