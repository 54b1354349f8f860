//! Network operations on [`NdArray`]s, each with its backward pass.
//! Activations are `[channels, time]`; batched head tensors are
//! `[batch, features]`.

use crate::kernels;
use crate::{Error, NdArray, Result, Scalar};

fn dims2<T: Scalar>(x: &NdArray<T>, what: &str) -> Result<(usize, usize)> {
    x.expect_rank(2, what)?;
    Ok((x.shape()[0], x.shape()[1]))
}

fn expect_shape<T: Scalar>(x: &NdArray<T>, shape: &[usize], what: &str) -> Result<()> {
    if x.shape() != shape {
        return Err(Error::Shape(format!(
            "{what} must have shape {shape:?}, got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

/// Per-channel dilated convolution with `m` output maps per input channel
/// and symmetric zero padding. `kernel` is `[c, m, k]`; output channel
/// `ci * m + j` uses `kernel[ci, j, :]`.
pub fn depthwise_atrous_conv<T: Scalar>(x: &NdArray<T>, kernel: &NdArray<T>, dilation: usize) -> Result<NdArray<T>> {
    let (c, t) = dims2(x, "depthwise input")?;
    kernel.expect_rank(3, "depthwise kernel")?;
    let (m, k) = (kernel.shape()[1], kernel.shape()[2]);
    expect_shape(kernel, &[c, m, k], "depthwise kernel")?;
    check_dilation(t, k, dilation)?;
    let h = (k / 2) as isize;
    let mut out = NdArray::zeros(&[c * m, t]);
    let (xd, kd) = (x.data(), kernel.data());
    let od = out.data_mut();
    for ci in 0..c {
        for j in 0..m {
            for kk in 0..k {
                let w = kd[(ci * m + j) * k + kk];
                let shift = (kk as isize - h) * dilation as isize;
                for ti in 0..t {
                    let s = ti as isize + shift;
                    if s >= 0 && (s as usize) < t {
                        od[(ci * m + j) * t + ti] = od[(ci * m + j) * t + ti] + w * xd[ci * t + s as usize];
                    }
                }
            }
        }
    }
    Ok(out)
}

fn check_dilation(t: usize, k: usize, dilation: usize) -> Result<()> {
    if dilation == 0 || k.is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "need odd kernel width and positive dilation, got k={k}, d={dilation}"
        )));
    }
    if t <= (k - 1) * dilation {
        return Err(Error::Shape(format!(
            "sequence of {t} samples is too short for kernel width {k} at dilation {dilation}"
        )));
    }
    Ok(())
}

/// Returns `(dx, dkernel)`.
pub fn depthwise_atrous_conv_backward<T: Scalar>(
    x: &NdArray<T>,
    kernel: &NdArray<T>,
    dilation: usize,
    dy: &NdArray<T>,
) -> Result<(NdArray<T>, NdArray<T>)> {
    let (c, t) = dims2(x, "depthwise input")?;
    let (m, k) = (kernel.shape()[1], kernel.shape()[2]);
    expect_shape(dy, &[c * m, t], "depthwise output gradient")?;
    let h = (k / 2) as isize;
    let mut dx = NdArray::zeros(&[c, t]);
    let mut dk = NdArray::zeros(&[c, m, k]);
    for ci in 0..c {
        for j in 0..m {
            for kk in 0..k {
                let w = kernel.data()[(ci * m + j) * k + kk];
                let shift = (kk as isize - h) * dilation as isize;
                let mut acc = T::zero();
                for ti in 0..t {
                    let s = ti as isize + shift;
                    if s >= 0 && (s as usize) < t {
                        let g = dy.data()[(ci * m + j) * t + ti];
                        acc = acc + g * x.data()[ci * t + s as usize];
                        let d = &mut dx.data_mut()[ci * t + s as usize];
                        *d = *d + g * w;
                    }
                }
                dk.data_mut()[(ci * m + j) * k + kk] = acc;
            }
        }
    }
    Ok((dx, dk))
}

/// `y[f, t] = sum_c w[f, c] x[c, t] + bias[f]`.
pub fn pointwise_conv<T: Scalar>(x: &NdArray<T>, w: &NdArray<T>, bias: Option<&NdArray<T>>) -> Result<NdArray<T>> {
    let (c, t) = dims2(x, "pointwise input")?;
    let (f, wc) = dims2(w, "pointwise kernel")?;
    if wc != c {
        return Err(Error::Shape(format!(
            "pointwise kernel expects {wc} channels, input has {c}"
        )));
    }
    let mut out = NdArray::zeros(&[f, t]);
    kernels::matmul_into(w.data(), f, c, x.data(), t, out.data_mut(), t, &(0..t), false);
    if let Some(b) = bias {
        expect_shape(b, &[f], "pointwise bias")?;
        kernels::add_row_bias(out.data_mut(), b.data(), t, &(0..t));
    }
    Ok(out)
}

/// Returns `(dx, dw, dbias)`.
pub fn pointwise_conv_backward<T: Scalar>(
    x: &NdArray<T>,
    w: &NdArray<T>,
    dy: &NdArray<T>,
) -> Result<(NdArray<T>, NdArray<T>, NdArray<T>)> {
    let (c, t) = dims2(x, "pointwise input")?;
    let f = w.shape()[0];
    expect_shape(dy, &[f, t], "pointwise output gradient")?;
    let r = 0..t;
    let mut dw = NdArray::zeros(&[f, c]);
    kernels::matmul_grad_weight(dy.data(), f, t, &r, x.data(), t, c, dw.data_mut());
    let mut dx = NdArray::zeros(&[c, t]);
    kernels::matmul_grad_input(w.data(), f, c, dy.data(), t, &r, dx.data_mut(), t, false);
    let mut db = NdArray::zeros(&[f]);
    kernels::row_sums_add(dy.data(), f, t, &r, db.data_mut());
    Ok((dx, dw, db))
}

/// Folds a depthwise kernel `[c, m, k]` and pointwise kernel `[f, c m]` into
/// one dilated convolution kernel `[f, c, k]`.
pub fn fold_separable<T: Scalar>(pointwise: &NdArray<T>, depthwise: &NdArray<T>) -> Result<NdArray<T>> {
    depthwise.expect_rank(3, "depthwise kernel")?;
    let (c, m, k) = (depthwise.shape()[0], depthwise.shape()[1], depthwise.shape()[2]);
    let (f, cm) = dims2(pointwise, "pointwise kernel")?;
    if cm != c * m {
        return Err(Error::Shape(format!(
            "pointwise kernel has {cm} inputs, depthwise yields {}",
            c * m
        )));
    }
    let mut v = NdArray::zeros(&[f, c, k]);
    kernels::fold_separable(pointwise.data(), depthwise.data(), f, c, m, k, v.data_mut());
    Ok(v)
}

/// Returns `(dpointwise, ddepthwise)` from the folded kernel gradient.
pub fn fold_separable_backward<T: Scalar>(
    pointwise: &NdArray<T>,
    depthwise: &NdArray<T>,
    dv: &NdArray<T>,
) -> Result<(NdArray<T>, NdArray<T>)> {
    let (c, m, k) = (depthwise.shape()[0], depthwise.shape()[1], depthwise.shape()[2]);
    let f = pointwise.shape()[0];
    expect_shape(dv, &[f, c, k], "folded kernel gradient")?;
    let mut dw = NdArray::zeros(pointwise.shape());
    let mut dh = NdArray::zeros(depthwise.shape());
    kernels::unfold_separable_grad(
        pointwise.data(),
        depthwise.data(),
        dv.data(),
        f,
        c,
        m,
        k,
        dw.data_mut(),
        dh.data_mut(),
    );
    Ok((dw, dh))
}

/// Dense dilated convolution with kernel `[f, c, k]` and optional bias.
pub fn dilated_conv<T: Scalar>(
    x: &NdArray<T>,
    kernel: &NdArray<T>,
    bias: Option<&NdArray<T>>,
    dilation: usize,
) -> Result<NdArray<T>> {
    let (c, t) = dims2(x, "conv input")?;
    kernel.expect_rank(3, "conv kernel")?;
    let (f, k) = (kernel.shape()[0], kernel.shape()[2]);
    expect_shape(kernel, &[f, c, k], "conv kernel")?;
    check_dilation(t, k, dilation)?;
    let r = 0..t;
    let mut col = vec![T::zero(); c * k * t];
    kernels::im2col(x.data(), c, t, k, dilation, &r, &mut col);
    let mut out = NdArray::zeros(&[f, t]);
    kernels::matmul_into(kernel.data(), f, c * k, &col, t, out.data_mut(), t, &r, false);
    if let Some(b) = bias {
        expect_shape(b, &[f], "conv bias")?;
        kernels::add_row_bias(out.data_mut(), b.data(), t, &r);
    }
    Ok(out)
}

/// Returns `(dx, dkernel, dbias)`.
pub fn dilated_conv_backward<T: Scalar>(
    x: &NdArray<T>,
    kernel: &NdArray<T>,
    dilation: usize,
    dy: &NdArray<T>,
) -> Result<(NdArray<T>, NdArray<T>, NdArray<T>)> {
    let (c, t) = dims2(x, "conv input")?;
    let (f, k) = (kernel.shape()[0], kernel.shape()[2]);
    expect_shape(dy, &[f, t], "conv output gradient")?;
    let r = 0..t;
    let mut col = vec![T::zero(); c * k * t];
    kernels::im2col(x.data(), c, t, k, dilation, &r, &mut col);
    let mut dk = NdArray::zeros(&[f, c, k]);
    kernels::matmul_grad_weight(dy.data(), f, t, &r, &col, t, c * k, dk.data_mut());
    let mut db = NdArray::zeros(&[f]);
    kernels::row_sums_add(dy.data(), f, t, &r, db.data_mut());
    kernels::matmul_grad_input(kernel.data(), f, c * k, dy.data(), t, &r, &mut col, t, false);
    let mut dx = NdArray::zeros(&[c, t]);
    kernels::col2im_add(&col, c, t, k, dilation, &r, dx.data_mut());
    Ok((dx, dk, db))
}

/// Saved state of a layer normalization.
#[derive(Debug, Clone)]
pub struct LnCache<T> {
    pub xhat: NdArray<T>,
    pub inv_std: Vec<T>,
}

fn as_columns<T: Scalar>(x: &NdArray<T>) -> Result<(usize, usize)> {
    match x.rank() {
        1 => Ok((x.shape()[0], 1)),
        2 => Ok((x.shape()[0], x.shape()[1])),
        _ => Err(Error::Shape(format!(
            "layer norm input must be rank 1 or 2, got {:?}",
            x.shape()
        ))),
    }
}

/// Normalizes each time step over the channel axis (axis 0) to zero mean and
/// unit variance (`eps = 1e-5`), then applies per-channel gain and bias. A
/// rank-1 input is a single column.
pub fn layer_norm<T: Scalar>(x: &NdArray<T>, gain: &NdArray<T>, bias: &NdArray<T>) -> Result<(NdArray<T>, LnCache<T>)> {
    let (c, t) = as_columns(x)?;
    expect_shape(gain, &[c], "layer norm gain")?;
    expect_shape(bias, &[c], "layer norm bias")?;
    let mut xhat = x.clone();
    let mut out = NdArray::zeros(x.shape());
    let mut inv_std = vec![T::zero(); t];
    let mut mean = vec![T::zero(); t];
    kernels::ln_forward(
        xhat.data_mut(),
        c,
        t,
        &(0..t),
        gain.data(),
        bias.data(),
        out.data_mut(),
        &mut inv_std,
        &mut mean,
    );
    Ok((out, LnCache { xhat, inv_std }))
}

/// Returns `(dx, dgain, dbias)`.
pub fn layer_norm_backward<T: Scalar>(
    cache: &LnCache<T>,
    gain: &NdArray<T>,
    dy: &NdArray<T>,
) -> Result<(NdArray<T>, NdArray<T>, NdArray<T>)> {
    let (c, t) = as_columns(&cache.xhat)?;
    expect_shape(dy, cache.xhat.shape(), "layer norm output gradient")?;
    let mut dx = NdArray::zeros(dy.shape());
    let mut dg = NdArray::zeros(&[c]);
    let mut db = NdArray::zeros(&[c]);
    let mut s1 = vec![T::zero(); t];
    let mut s2 = vec![T::zero(); t];
    kernels::ln_backward(
        dy.data(),
        cache.xhat.data(),
        &cache.inv_std,
        gain.data(),
        c,
        t,
        &(0..t),
        dx.data_mut(),
        dg.data_mut(),
        db.data_mut(),
        &mut s1,
        &mut s2,
    );
    Ok((dx, dg, db))
}

pub fn tanh<T: Scalar>(x: &NdArray<T>) -> NdArray<T> {
    let mut y = x.clone();
    T::tanh_inplace(y.data_mut());
    y
}

/// Gradient through `y = tanh(x)` given the forward output `y`.
pub fn tanh_backward<T: Scalar>(y: &NdArray<T>, dy: &NdArray<T>) -> NdArray<T> {
    let mut dx = dy.clone();
    let n = dx.len();
    kernels::tanh_backward_inplace(dx.data_mut(), y.data(), 1, n, &(0..n));
    dx
}

pub fn selu<T: Scalar>(x: &NdArray<T>) -> NdArray<T> {
    NdArray::from_fn(x.shape(), |i| kernels::selu(x.data()[i]))
}

pub fn selu_backward<T: Scalar>(x: &NdArray<T>, dy: &NdArray<T>) -> NdArray<T> {
    NdArray::from_fn(x.shape(), |i| dy.data()[i] * kernels::selu_grad(x.data()[i]))
}

/// Squares `s` (`[f, t]`), drops `crop` samples from each end and averages
/// over the remaining time steps.
pub fn energy_pool<T: Scalar>(s: &NdArray<T>, crop: usize) -> Result<NdArray<T>> {
    let (f, t) = dims2(s, "pseudo-energy input")?;
    if t <= 2 * crop {
        return Err(Error::Shape(format!(
            "{t} samples leave nothing after cropping {crop} per side"
        )));
    }
    let n = T::from_f64((t - 2 * crop) as f64);
    Ok(NdArray::from_fn(&[f], |fi| {
        s.data()[fi * t + crop..fi * t + t - crop]
            .iter()
            .map(|v| *v * *v)
            .sum::<T>()
            / n
    }))
}

pub fn energy_pool_backward<T: Scalar>(s: &NdArray<T>, crop: usize, de: &NdArray<T>) -> Result<NdArray<T>> {
    let (f, t) = dims2(s, "pseudo-energy input")?;
    expect_shape(de, &[f], "pseudo-energy gradient")?;
    let scale = T::from_f64(2.0 / (t - 2 * crop) as f64);
    let mut ds = NdArray::zeros(&[f, t]);
    for fi in 0..f {
        for ti in crop..t - crop {
            ds.data_mut()[fi * t + ti] = scale * s.data()[fi * t + ti] * de.data()[fi];
        }
    }
    Ok(ds)
}

/// Pooled energy, layer-normalized over channels, through SeLU.
pub fn pseudo_energy<T: Scalar>(
    s: &NdArray<T>,
    crop: usize,
    gain: &NdArray<T>,
    bias: &NdArray<T>,
) -> Result<NdArray<T>> {
    let pooled = energy_pool(s, crop)?;
    let (u, _) = layer_norm(&pooled, gain, bias)?;
    Ok(selu(&u))
}

/// `y = w x + b` for a feature vector `x`.
pub fn dense<T: Scalar>(x: &NdArray<T>, w: &NdArray<T>, b: &NdArray<T>) -> Result<NdArray<T>> {
    x.expect_rank(1, "dense input")?;
    let (n, f) = dims2(w, "dense weight")?;
    if f != x.len() {
        return Err(Error::Shape(format!(
            "dense weight expects {f} inputs, got {}",
            x.len()
        )));
    }
    expect_shape(b, &[n], "dense bias")?;
    Ok(NdArray::from_fn(&[n], |o| {
        b.data()[o] + (0..f).map(|i| w.data()[o * f + i] * x.data()[i]).sum::<T>()
    }))
}

/// Returns `(dx, dw, db)`.
pub fn dense_backward<T: Scalar>(
    x: &NdArray<T>,
    w: &NdArray<T>,
    dy: &NdArray<T>,
) -> Result<(NdArray<T>, NdArray<T>, NdArray<T>)> {
    let (n, f) = dims2(w, "dense weight")?;
    expect_shape(dy, &[n], "dense output gradient")?;
    let dx = NdArray::from_fn(&[f], |i| (0..n).map(|o| w.data()[o * f + i] * dy.data()[o]).sum::<T>());
    let dw = NdArray::from_fn(&[n, f], |idx| dy.data()[idx / f] * x.data()[idx % f]);
    Ok((dx, dw, dy.clone()))
}

/// Row-wise softmax of `[batch, n]` logits (rank 1 is one row).
pub fn softmax<T: Scalar>(logits: &NdArray<T>) -> NdArray<T> {
    let n = *logits.shape().last().unwrap_or(&0);
    let mut out = logits.clone();
    if n == 0 {
        return out;
    }
    for row in out.data_mut().chunks_mut(n) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        row.iter_mut().for_each(|v| *v = *v / sum);
    }
    out
}

/// Mean cross-entropy of `[batch, n]` logits against class indices;
/// returns the loss and its gradient with respect to the logits.
pub fn cross_entropy<T: Scalar>(logits: &NdArray<T>, labels: &[usize]) -> Result<(T, NdArray<T>)> {
    let (b, n) = dims2(logits, "logits")?;
    if labels.len() != b {
        return Err(Error::Shape(format!("{} labels for a batch of {b}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
        return Err(Error::InvalidLabel(format!("class {bad} out of range for {n} classes")));
    }
    let p = softmax(logits);
    let inv_b = T::one() / T::from_f64(b as f64);
    let mut loss = T::zero();
    let mut grad = p.clone();
    for (i, &l) in labels.iter().enumerate() {
        loss = loss - p.data()[i * n + l].max(T::min_positive_value()).ln();
        grad.data_mut()[i * n + l] = grad.data()[i * n + l] - T::one();
    }
    grad.data_mut().iter_mut().for_each(|g| *g = *g * inv_b);
    Ok((loss * inv_b, grad))
}

/// Mean squared distance between `[batch, 2]` predictions and the unit
/// vectors `(cos theta, sin theta)`; returns the loss and its gradient.
pub fn unit_circle_loss<T: Scalar>(pred: &NdArray<T>, theta_deg: &[f64]) -> Result<(T, NdArray<T>)> {
    let (b, n) = dims2(pred, "predictions")?;
    if n != 2 || theta_deg.len() != b {
        return Err(Error::Shape(format!(
            "regression loss needs [batch, 2] predictions and one angle per row, got {:?} and {}",
            pred.shape(),
            theta_deg.len()
        )));
    }
    let inv_b = T::one() / T::from_f64(b as f64);
    let mut loss = T::zero();
    let mut grad = NdArray::zeros(&[b, 2]);
    for (i, &theta) in theta_deg.iter().enumerate() {
        let target = beamlab_core::dataset::unit_label(theta);
        for (k, &tk) in target.iter().enumerate() {
            let d = pred.data()[i * 2 + k] - T::from_f64(tk);
            loss = loss + d * d;
            grad.data_mut()[i * 2 + k] = T::from_f64(2.0) * d * inv_b;
        }
    }
    Ok((loss * inv_b, grad))
}

/// Azimuth in degrees, `[-180, 180)`, of a regression output.
pub fn regression_azimuth(x: f64, y: f64) -> f64 {
    beamlab_core::wrap_azimuth(y.atan2(x).to_degrees())
}
