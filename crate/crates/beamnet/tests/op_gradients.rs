use beamnet::{ops, NdArray};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

fn rand_arr(shape: &[usize], rng: &mut ChaCha8Rng) -> NdArray<f64> {
    let n = shape.iter().product();
    NdArray::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &NdArray<f64>, b: &NdArray<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Checks `grad` against a fourth-order central difference of `f` at `x`,
/// over every coordinate.
fn check(name: &str, x: &NdArray<f64>, grad: &NdArray<f64>, f: impl Fn(&NdArray<f64>) -> f64) {
    assert_eq!(x.shape(), grad.shape(), "{name}");
    let h = 1e-3;
    for i in 0..x.len() {
        let at = |d: f64| {
            let mut y = x.clone();
            y.data_mut()[i] += d;
            f(&y)
        };
        let fd = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
        let g = grad.data()[i];
        let err = (g - fd).abs() / (g.abs() + fd.abs()).max(1.0);
        assert!(err < TOL, "{name}[{i}]: analytic {g}, numeric {fd}");
    }
}

#[test]
fn depthwise_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_arr(&[3, 20], &mut rng);
    let k = rand_arr(&[3, 2, 3], &mut rng);
    let r = rand_arr(&[6, 20], &mut rng);
    for d in [1, 2, 4] {
        let (dx, dk) = ops::depthwise_atrous_conv_backward(&x, &k, d, &r).unwrap();
        check("depthwise dx", &x, &dx, |x| {
            dot(&ops::depthwise_atrous_conv(x, &k, d).unwrap(), &r)
        });
        check("depthwise dk", &k, &dk, |k| {
            dot(&ops::depthwise_atrous_conv(&x, k, d).unwrap(), &r)
        });
    }
}

#[test]
fn pointwise_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = rand_arr(&[4, 9], &mut rng);
    let w = rand_arr(&[5, 4], &mut rng);
    let b = rand_arr(&[5], &mut rng);
    let r = rand_arr(&[5, 9], &mut rng);
    let (dx, dw, db) = ops::pointwise_conv_backward(&x, &w, &r).unwrap();
    check("pointwise dx", &x, &dx, |x| {
        dot(&ops::pointwise_conv(x, &w, Some(&b)).unwrap(), &r)
    });
    check("pointwise dw", &w, &dw, |w| {
        dot(&ops::pointwise_conv(&x, w, Some(&b)).unwrap(), &r)
    });
    check("pointwise db", &b, &db, |b| {
        dot(&ops::pointwise_conv(&x, &w, Some(b)).unwrap(), &r)
    });
}

#[test]
fn dilated_conv_and_fold_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_arr(&[3, 17], &mut rng);
    let pw = rand_arr(&[4, 6], &mut rng);
    let dw = rand_arr(&[3, 2, 3], &mut rng);
    let b = rand_arr(&[4], &mut rng);
    let r = rand_arr(&[4, 17], &mut rng);
    let v = ops::fold_separable(&pw, &dw).unwrap();
    let (dx, dv, db) = ops::dilated_conv_backward(&x, &v, 2, &r).unwrap();
    check("conv dx", &x, &dx, |x| {
        dot(&ops::dilated_conv(x, &v, Some(&b), 2).unwrap(), &r)
    });
    check("conv dk", &v, &dv, |v| {
        dot(&ops::dilated_conv(&x, v, Some(&b), 2).unwrap(), &r)
    });
    check("conv db", &b, &db, |b| {
        dot(&ops::dilated_conv(&x, &v, Some(b), 2).unwrap(), &r)
    });
    let (dpw, ddw) = ops::fold_separable_backward(&pw, &dw, &dv).unwrap();
    let through = |pw: &NdArray<f64>, dw: &NdArray<f64>| {
        dot(
            &ops::dilated_conv(&x, &ops::fold_separable(pw, dw).unwrap(), Some(&b), 2).unwrap(),
            &r,
        )
    };
    check("fold dpointwise", &pw, &dpw, |p| through(p, &dw));
    check("fold ddepthwise", &dw, &ddw, |d| through(&pw, d));
}

#[test]
fn folded_convolution_equals_depthwise_then_pointwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_arr(&[3, 40], &mut rng);
    let pw = rand_arr(&[5, 12], &mut rng);
    let dw = rand_arr(&[3, 4, 3], &mut rng);
    let b = rand_arr(&[5], &mut rng);
    for d in [1, 4, 8] {
        let two_step = ops::pointwise_conv(&ops::depthwise_atrous_conv(&x, &dw, d).unwrap(), &pw, Some(&b)).unwrap();
        let folded = ops::dilated_conv(&x, &ops::fold_separable(&pw, &dw).unwrap(), Some(&b), d).unwrap();
        for (a, c) in two_step.data().iter().zip(folded.data()) {
            assert!((a - c).abs() < 1e-12);
        }
    }
}

#[test]
fn layer_norm_matches_naive_and_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_arr(&[6, 7], &mut rng);
    let g = rand_arr(&[6], &mut rng);
    let b = rand_arr(&[6], &mut rng);
    let (y, cache) = ops::layer_norm(&x, &g, &b).unwrap();
    for t in 0..7 {
        let col: Vec<f64> = (0..6).map(|c| x.at(&[c, t])).collect();
        let mean = col.iter().sum::<f64>() / 6.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        for (c, v) in col.iter().enumerate() {
            let want = g.at(&[c]) * (v - mean) / (var + 1e-5).sqrt() + b.at(&[c]);
            assert!((y.at(&[c, t]) - want).abs() < 1e-12);
        }
    }
    let r = rand_arr(&[6, 7], &mut rng);
    let (dx, dg, db) = ops::layer_norm_backward(&cache, &g, &r).unwrap();
    check("ln dx", &x, &dx, |x| dot(&ops::layer_norm(x, &g, &b).unwrap().0, &r));
    check("ln dgain", &g, &dg, |g| dot(&ops::layer_norm(&x, g, &b).unwrap().0, &r));
    check("ln dbias", &b, &db, |b| dot(&ops::layer_norm(&x, &g, b).unwrap().0, &r));
    // rank 1 is a single column
    let v = rand_arr(&[6], &mut rng);
    let rv = rand_arr(&[6], &mut rng);
    let (_, cv) = ops::layer_norm(&v, &g, &b).unwrap();
    let (dv, _, _) = ops::layer_norm_backward(&cv, &g, &rv).unwrap();
    check("ln rank1 dx", &v, &dv, |v| {
        dot(&ops::layer_norm(v, &g, &b).unwrap().0, &rv)
    });
}

#[test]
fn activation_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_arr(&[3, 8], &mut rng);
    let r = rand_arr(&[3, 8], &mut rng);
    let y = ops::tanh(&x);
    check("tanh", &x, &ops::tanh_backward(&y, &r), |x| dot(&ops::tanh(x), &r));
    let x = NdArray::from_fn(&[3, 8], |i| x.data()[i] * 3.0);
    check("selu", &x, &ops::selu_backward(&x, &r), |x| dot(&ops::selu(x), &r));
}

#[test]
fn pooling_and_dense_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s = rand_arr(&[4, 15], &mut rng);
    let de = rand_arr(&[4], &mut rng);
    let ds = ops::energy_pool_backward(&s, 3, &de).unwrap();
    check("energy pool", &s, &ds, |s| dot(&ops::energy_pool(s, 3).unwrap(), &de));
    let x = rand_arr(&[4], &mut rng);
    let w = rand_arr(&[3, 4], &mut rng);
    let b = rand_arr(&[3], &mut rng);
    let r = rand_arr(&[3], &mut rng);
    let (dx, dw, db) = ops::dense_backward(&x, &w, &r).unwrap();
    check("dense dx", &x, &dx, |x| dot(&ops::dense(x, &w, &b).unwrap(), &r));
    check("dense dw", &w, &dw, |w| dot(&ops::dense(&x, w, &b).unwrap(), &r));
    check("dense db", &b, &db, |b| dot(&ops::dense(&x, &w, b).unwrap(), &r));
}

#[test]
fn loss_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let logits = rand_arr(&[3, 5], &mut rng);
    let labels = [4, 0, 2];
    let (loss, g) = ops::cross_entropy(&logits, &labels).unwrap();
    let naive: f64 = (0..3)
        .map(|i| {
            let row = &logits.data()[i * 5..i * 5 + 5];
            row.iter().map(|v| v.exp()).sum::<f64>().ln() - row[labels[i]]
        })
        .sum::<f64>()
        / 3.0;
    assert!((loss - naive).abs() < 1e-12);
    check("cross entropy", &logits, &g, |l| {
        ops::cross_entropy(l, &labels).unwrap().0
    });
    let pred = rand_arr(&[3, 2], &mut rng);
    let theta = [10.0, -135.0, 90.0];
    let (loss, g) = ops::unit_circle_loss(&pred, &theta).unwrap();
    let naive: f64 = (0..3)
        .map(|i| {
            let t = f64::to_radians(theta[i]);
            (pred.at(&[i, 0]) - t.cos()).powi(2) + (pred.at(&[i, 1]) - t.sin()).powi(2)
        })
        .sum::<f64>()
        / 3.0;
    assert!((loss - naive).abs() < 1e-12);
    check("unit circle", &pred, &g, |p| {
        ops::unit_circle_loss(p, &theta).unwrap().0
    });
    assert!(matches!(
        ops::cross_entropy(&logits, &[0, 5, 1]),
        Err(beamnet::Error::InvalidLabel(_))
    ));
}

#[test]
fn regression_azimuth_inverts_unit_label() {
    for theta in [-180.0, -90.5, 0.0, 33.3, 179.0] {
        let t = f64::to_radians(theta);
        assert!((ops::regression_azimuth(t.cos(), t.sin()) - theta).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(v in proptest::collection::vec(-50.0f64..50.0, 12), shift in -100.0f64..100.0) {
        let x = NdArray::new(&[3, 4], v.clone()).unwrap();
        let p = ops::softmax(&x);
        for row in p.data().chunks(4) {
            prop_assert!(row.iter().all(|&q| (0.0..=1.0).contains(&q)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // invariant to a per-row constant
        let shifted = NdArray::new(&[3, 4], v.iter().map(|a| a + shift).collect()).unwrap();
        for (a, b) in p.data().iter().zip(ops::softmax(&shifted).data()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn layer_norm_output_is_standardized(v in proptest::collection::vec(-10.0f64..10.0, 16)) {
        let x = NdArray::new(&[8, 2], v).unwrap();
        let ones = NdArray::new(&[8], vec![1.0; 8]).unwrap();
        let zeros = NdArray::zeros(&[8]);
        let (y, _) = ops::layer_norm(&x, &ones, &zeros).unwrap();
        for t in 0..2 {
            let col: Vec<f64> = (0..8).map(|c| y.at(&[c, t])).collect();
            prop_assert!(col.iter().sum::<f64>().abs() < 1e-9);
            prop_assert!(col.iter().map(|a| a * a).sum::<f64>() / 8.0 <= 1.0 + 1e-9);
        }
    }
}
