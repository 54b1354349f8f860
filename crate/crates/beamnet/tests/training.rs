use beamlab_core::dataset::{
    build_dataset, Dataset, DatasetConfig, RenderConfig, SignalSource, SnrPolicy, SyntheticKind, TorusSpec,
};
use beamlab_core::rir::Environment;
use beamlab_core::MicArray;
use beamnet::train::load_splits;
use beamnet::{load_model, save_model, train, Error, Example, Head, Model, ModelSpec, TrainConfig};

fn small_dataset(dir: &std::path::Path) -> Dataset {
    let cfg = DatasetConfig {
        n_examples: 100,
        torus: TorusSpec::default(),
        environment: Environment::FreeField,
        array: MicArray::uma8(),
        render: RenderConfig {
            excerpt_len: 1280,
            ..RenderConfig::default()
        },
        snr: SnrPolicy::Noiseless,
        signals: SignalSource::Synthetic {
            kinds: vec![SyntheticKind::White, SyntheticKind::Pink],
            count: 2,
            seconds: 0.5,
        },
    };
    build_dataset(&cfg, dir, 21).unwrap();
    Dataset::open(dir).unwrap()
}

fn config() -> TrainConfig {
    TrainConfig {
        batch_size: 10,
        epochs: 2,
        augment: SnrPolicy::AugmentRandom { x_min: 10.0 },
        max_shift: 64,
        seed: 9,
        ..TrainConfig::default()
    }
}

#[test]
fn training_descends_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let spec = ModelSpec::with_channels(8, Head::Regression);
    let (tr, va) = load_splits(&ds, &spec).unwrap();
    let a = train(Model::init(spec.clone(), 1).unwrap(), &tr, &va, &config()).unwrap();
    let h = &a.history;
    assert!(h.epochs[0].validation.loss < h.initial_validation.loss);
    assert!(h.final_train.loss < h.initial_train.loss);

    let b = train(Model::init(spec, 1).unwrap(), &tr, &va, &config()).unwrap();
    assert_eq!(
        serde_json::to_string(h).unwrap(),
        serde_json::to_string(&b.history).unwrap()
    );
    assert!(a
        .model
        .params()
        .iter()
        .zip(b.model.params())
        .all(|(x, y)| x.to_bits() == y.to_bits()));

    let path = dir.path().join("model.bin");
    save_model(&a.model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back.params(), a.model.params());
}

#[test]
fn classification_training_descends() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let spec = ModelSpec::with_channels(8, Head::Classification { n_classes: 8 });
    let (tr, va) = load_splits(&ds, &spec).unwrap();
    let out = train(Model::init(spec, 2).unwrap(), &tr, &va, &config()).unwrap();
    assert!(out.history.final_train.loss < out.history.initial_train.loss);
}

#[test]
fn divergence_returns_the_last_good_checkpoint() {
    let spec = ModelSpec::with_channels(4, Head::Regression);
    let good = Example {
        id: 0,
        theta: 10.0,
        n_channels: 7,
        n_samples: 1024,
        data: (0..7 * 1024).map(|i| ((i * 7919) % 101) as f32 / 50.0 - 1.0).collect(),
    };
    let mut bad = good.clone();
    bad.id = 1;
    bad.data[3000] = f32::NAN;
    let cfg = TrainConfig {
        batch_size: 1,
        epochs: 1,
        ..TrainConfig::default()
    };
    let init = Model::init(spec, 5).unwrap();
    match train(init.clone(), &[bad], &[good], &cfg) {
        Err(Error::Diverged { iteration, checkpoint }) => {
            assert_eq!(iteration, 0);
            assert_eq!(checkpoint.params(), init.params());
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.history)),
    }
}

#[test]
fn mismatched_shapes_are_rejected() {
    let spec = ModelSpec::with_channels(4, Head::Regression);
    let short = Example {
        id: 0,
        theta: 0.0,
        n_channels: 7,
        n_samples: 500,
        data: vec![0.0; 3500],
    };
    let r = train(
        Model::init(spec, 1).unwrap(),
        std::slice::from_ref(&short),
        std::slice::from_ref(&short),
        &TrainConfig::default(),
    );
    assert!(matches!(r, Err(Error::Shape(_))));
}
