use std::time::Instant;

use beamlab_core::MultichannelFrame;
use beamnet::{infer_doa, Head, InferenceSession, Model, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frames(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * 7 * 1024).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn fast_path_agrees_with_reference_forward() {
    for (nf, head) in [(128, Head::Regression), (24, Head::Classification { n_classes: 16 })] {
        let model = Model::<f32>::init(ModelSpec::with_channels(nf, head), 11).unwrap();
        let exact = model.cast::<f64>();
        let mut s = InferenceSession::new(model);
        let x = frames(3, 12);
        for ex in x.chunks_exact(7 * 1024) {
            let fast = s.outputs(ex, 1024).unwrap().to_vec();
            let xd: Vec<f64> = ex.iter().map(|&v| f64::from(v)).collect();
            let want = exact.forward(&xd, 1024).unwrap();
            for (a, b) in fast.iter().zip(&want) {
                assert!((f64::from(*a) - b).abs() < 1e-4 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn batch_rows_equal_single_calls_bitwise() {
    let model = Model::<f32>::init(ModelSpec::with_channels(16, Head::Classification { n_classes: 8 }), 2).unwrap();
    let mut s = InferenceSession::new(model.clone());
    let x = frames(100, 3);
    let batch = s.outputs_batch(&x, 100, 1024).unwrap();
    for (i, ex) in x.chunks_exact(7 * 1024).enumerate().step_by(9) {
        let mut fresh = InferenceSession::new(model.clone());
        let single = fresh.outputs(ex, 1024).unwrap();
        for (o, v) in single.iter().enumerate() {
            assert_eq!(v.to_bits(), batch.at(&[i, o]).to_bits());
        }
    }
}

#[test]
fn repeated_inference_is_deterministic() {
    let model = Model::<f32>::init(ModelSpec::with_channels(16, Head::Regression), 5).unwrap();
    let x: Vec<f64> = frames(1, 6).into_iter().map(f64::from).collect();
    let frame = MultichannelFrame::new(44100.0, 7, 1024, x).unwrap();
    let a = infer_doa(&model, &frame).unwrap();
    let mut s = InferenceSession::new(model);
    // a different frame in between must not leave a trace
    let other = MultichannelFrame::new(44100.0, 7, 1024, frames(1, 7).into_iter().map(f64::from).collect()).unwrap();
    s.infer(&other).unwrap();
    let b = s.infer(&frame).unwrap();
    assert_eq!(a.theta.to_bits(), b.theta.to_bits());
    assert_eq!(a.confidence.to_bits(), b.confidence.to_bits());
}

#[test]
#[ignore = "timing; run with --ignored"]
fn full_size_latency() {
    let model = Model::<f32>::init(ModelSpec::full(Head::Regression), 1).unwrap();
    let mut s = InferenceSession::new(model);
    let x = frames(1, 1);
    s.outputs(&x, 1024).unwrap();
    let mut times: Vec<f64> = (0..30)
        .map(|_| {
            let t0 = Instant::now();
            s.outputs(&x, 1024).unwrap();
            t0.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    times.sort_by(f64::total_cmp);
    eprintln!("median {:.2} ms, min {:.2} ms", times[15], times[0]);
}
