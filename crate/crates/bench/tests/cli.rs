use std::path::Path;
use std::process::Command;

fn beamlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_beamlab")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = beamlab(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    let rir_cfg = write(
        &dir.path().join("rir.json"),
        r#"{"environment": "free_field", "sources": [{"r": 2.0, "theta": 30.0, "phi": 90.0}]}"#,
    );
    ok(&["simulate-rir", "--config", &rir_cfg, "--out", &d("rirs")]);
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rirs/rir_0000.json")).unwrap()).unwrap();
    assert_eq!(sidecar["image_count"], 1);
    assert!(dir.path().join("rirs/rir_0000.wav").exists());

    let ds_cfg = write(
        &dir.path().join("ds.json"),
        r#"{"n_examples": 40, "environment": "free_field",
            "render": {"rir": {"fs": 44100.0, "c": 343.0}, "frame_len": 1024, "excerpt_len": 8192, "rms_threshold": 0.1},
            "signals": {"synthetic": {"kinds": ["white", "pink"], "count": 2, "seconds": 1.0}}}"#,
    );
    ok(&["make-dataset", "--config", &ds_cfg, "--out", &d("ds"), "--seed", "3"]);

    let train_cfg = write(
        &dir.path().join("train.json"),
        r#"{"model": {"n_f": 4, "head": {"kind": "regression"}}, "train": {"batch_size": 8, "epochs": 1}}"#,
    );
    let log = ok(&[
        "train",
        "--dataset",
        &d("ds"),
        "--config",
        &train_cfg,
        "--out",
        &d("net.bin"),
        "--seed",
        "1",
    ]);
    assert!(log.contains("epoch   1"));
    assert!(dir.path().join("net.history.json").exists());

    ok(&[
        "locate",
        "--method",
        "beamnet",
        "--in",
        &d("ds"),
        "--model",
        &d("net.bin"),
        "--out",
        &d("loc.csv"),
    ]);
    let csv = std::fs::read_to_string(dir.path().join("loc.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);

    ok(&[
        "locate",
        "--method",
        "srp-phat",
        "--in",
        &d("rirs/rir_0000.wav"),
        "--out",
        &d("wav.csv"),
    ]);

    let bench_cfg = write(
        &dir.path().join("bench.json"),
        &format!(
            r#"{{"dataset": "{}", "methods": ["music", "srp-phat", "beamnet"], "model": "{}", "snrs_db": [null, 10.0]}}"#,
            d("ds"),
            d("net.bin")
        ),
    );
    ok(&["bench", "--config", &bench_cfg, "--out", &d("bench"), "--threads", "1"]);
    for f in ["results.csv", "summary.json", "report.md", "polar_music_snr_10.svg"] {
        assert!(dir.path().join("bench").join(f).exists(), "{f}");
    }
    let listing = ok(&["report", "--in", &d("bench/summary.json"), "--out", &d("again")]);
    assert_eq!(listing.lines().count(), 1 + 6);
    let md = std::fs::read_to_string(dir.path().join("again/report.md")).unwrap();
    assert!(md.contains("| srp-phat | 10 |"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(&dir.path().join("bad.json"), "{ not json");
    let out = beamlab(&["make-dataset", "--config", &bad, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let out = beamlab(&["bogus-command"]);
    assert_eq!(out.status.code(), Some(1));

    let cfg = write(
        &dir.path().join("bench.json"),
        r#"{"dataset": "/nonexistent/dataset", "methods": ["music"], "snrs_db": [null]}"#,
    );
    let out = beamlab(&["bench", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(beamlab(&["--help"]).status.code(), Some(0));
}
