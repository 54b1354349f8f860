use std::path::Path;

use beamlab::{run_benchmark, write_csv, BenchConfig};
use beamlab_core::dataset::{
    build_dataset, read_shard, DatasetConfig, RenderConfig, SignalSource, SnrPolicy, SyntheticKind, TorusSpec,
};
use beamlab_core::doa::Method;
use beamlab_core::rir::Environment;
use beamlab_core::MicArray;
use beamnet::{save_model, Head, Model, ModelSpec};

fn dataset(dir: &Path, n: usize) {
    let cfg = DatasetConfig {
        n_examples: n,
        torus: TorusSpec::default(),
        environment: Environment::FreeField,
        array: MicArray::uma8(),
        render: RenderConfig::default(),
        snr: SnrPolicy::Noiseless,
        signals: SignalSource::Synthetic {
            kinds: vec![SyntheticKind::White, SyntheticKind::Pink],
            count: 2,
            seconds: 1.0,
        },
    };
    build_dataset(&cfg, dir, 5).unwrap();
}

fn config(dir: &Path, methods: Vec<Method>) -> BenchConfig {
    BenchConfig {
        dataset: dir.to_path_buf(),
        split: beamlab_core::dataset::Split::Test,
        methods,
        model: None,
        snrs_db: vec![None, Some(20.0), Some(0.0)],
        seed: 8,
        max_examples: None,
        n_classes: Some(8),
    }
}

#[test]
fn methods_share_inputs_and_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), 60);
    let model_path = dir.path().join("net.bin");
    save_model(
        &Model::init(ModelSpec::with_channels(8, Head::Classification { n_classes: 16 }), 1).unwrap(),
        &model_path,
    )
    .unwrap();
    let mut cfg = config(dir.path(), vec![Method::Music, Method::SrpPhat, Method::Beamnet]);
    cfg.model = Some(model_path);
    let report = run_benchmark(&cfg).unwrap();
    assert_eq!(report.cells.len(), 9);
    for snr in &cfg.snrs_db {
        let sums: Vec<&str> = report
            .cells
            .iter()
            .filter(|c| c.snr_db == *snr)
            .map(|c| c.input_checksum.as_str())
            .collect();
        assert_eq!(sums.len(), 3);
        assert!(sums.iter().all(|s| *s == sums[0] && !s.is_empty()));
    }
    let distinct: std::collections::HashSet<&str> = report.cells.iter().map(|c| c.input_checksum.as_str()).collect();
    assert_eq!(distinct.len(), 3);
    for c in &report.cells {
        assert!(c.failure.is_none());
        let k = c.classification.as_ref().unwrap();
        assert_eq!(k.n_classes, if c.method == Method::Beamnet { 16 } else { 8 });
    }
    let music = report.cell(Method::Music, None).unwrap().error_stats.as_ref().unwrap();
    assert!(music.mean_abs < 5.0, "{}", music.mean_abs);
    assert_eq!(report.runtimes.len(), 3);
    assert_eq!(report.rows.len(), 9 * 6);

    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_csv(&report.rows, &a).unwrap();
    write_csv(&run_benchmark(&cfg).unwrap().rows, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let header = std::fs::read_to_string(&a).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "example_id,theta_true,theta_est,abs_error,method,snr");
}

#[test]
fn a_failing_cell_does_not_stop_the_run() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), 40);
    // silence one test record: adding noise at a finite SNR is then impossible
    let shard = dir.path().join("test.bin");
    let mut recs = read_shard(&shard).unwrap();
    recs[1].data.iter_mut().for_each(|v| *v = 0.0);
    let mut f = std::fs::File::create(&shard).unwrap();
    for r in &recs {
        r.write_to(&mut f).unwrap();
    }
    drop(f);
    let report = run_benchmark(&config(dir.path(), vec![Method::SrpPhat])).unwrap();
    assert_eq!(report.cells.len(), 3);
    assert!(report.cells[0].failure.is_none());
    assert!(report.cells[1].failure.as_ref().unwrap().contains("zero power"));
    assert!(report.cells[2].failure.is_some());
}

#[test]
fn beamnet_without_a_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    dataset(dir.path(), 20);
    let err = run_benchmark(&config(dir.path(), vec![Method::Beamnet])).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}
