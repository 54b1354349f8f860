//! Slice kernels over channel-major `[channels][time]` buffers. Each works
//! on a column range so the model only computes the time steps its output
//! depends on.

use std::ops::Range;

use crate::Scalar;

pub(crate) const LN_EPS: f64 = 1e-5;
pub(crate) const SELU_LAMBDA: f64 = 1.050_700_98;
pub(crate) const SELU_ALPHA: f64 = 1.673_263_24;

/// Shifted copies of `x` (`c x t`) for a width-`k` dilated kernel:
/// row `ci * k + j` holds `x[ci, a + i + (j - h) d]`, zero outside `[0, t)`.
pub(crate) fn im2col<T: Scalar>(x: &[T], c: usize, t: usize, k: usize, d: usize, r: &Range<usize>, col: &mut [T]) {
    let n = r.len();
    let h = (k / 2) as isize;
    for ci in 0..c {
        let row = &x[ci * t..(ci + 1) * t];
        for j in 0..k {
            let dst = &mut col[(ci * k + j) * n..(ci * k + j + 1) * n];
            let shift = (j as isize - h) * d as isize;
            let start = r.start as isize + shift;
            // valid i: 0 <= start + i < t
            let lo = (-start).clamp(0, n as isize) as usize;
            let hi = (t as isize - start).clamp(0, n as isize) as usize;
            dst[..lo].fill(T::zero());
            if hi > lo {
                let s = (start + lo as isize) as usize;
                dst[lo..hi].copy_from_slice(&row[s..s + hi - lo]);
            }
            dst[hi.max(lo)..].fill(T::zero());
        }
    }
}

/// Adjoint of [`im2col`]: scatters `dcol` back into `dx`.
pub(crate) fn col2im_add<T: Scalar>(
    dcol: &[T],
    c: usize,
    t: usize,
    k: usize,
    d: usize,
    r: &Range<usize>,
    dx: &mut [T],
) {
    let n = r.len();
    let h = (k / 2) as isize;
    for ci in 0..c {
        let row = &mut dx[ci * t..(ci + 1) * t];
        for j in 0..k {
            let src = &dcol[(ci * k + j) * n..(ci * k + j + 1) * n];
            let start = r.start as isize + (j as isize - h) * d as isize;
            let lo = (-start).clamp(0, n as isize) as usize;
            let hi = (t as isize - start).clamp(0, n as isize) as usize;
            if hi > lo {
                let s = (start + lo as isize) as usize;
                for (o, v) in row[s..s + hi - lo].iter_mut().zip(&src[lo..hi]) {
                    *o = *o + *v;
                }
            }
        }
    }
}

/// `out[:, r] (+)= w (m x kdim) . b` where `b` is `kdim x n` with row stride
/// `bs` and `out` has row stride `t`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul_into<T: Scalar>(
    w: &[T],
    m: usize,
    kdim: usize,
    b: &[T],
    bs: usize,
    out: &mut [T],
    t: usize,
    r: &Range<usize>,
    accumulate: bool,
) {
    let n = r.len();
    if n == 0 || m == 0 || kdim == 0 {
        return;
    }
    assert!(w.len() >= m * kdim && b.len() >= (kdim - 1) * bs + n && out.len() >= (m - 1) * t + r.end);
    let beta = if accumulate { T::one() } else { T::zero() };
    unsafe {
        T::gemm(
            m,
            kdim,
            n,
            T::one(),
            w.as_ptr(),
            kdim as isize,
            1,
            b.as_ptr(),
            bs as isize,
            1,
            beta,
            out.as_mut_ptr().add(r.start),
            t as isize,
            1,
        );
    }
}

/// `dw (m x kdim) += dout[:, r] . b^T`, `b` being `kdim x n` with row stride `bs`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul_grad_weight<T: Scalar>(
    dout: &[T],
    m: usize,
    t: usize,
    r: &Range<usize>,
    b: &[T],
    bs: usize,
    kdim: usize,
    dw: &mut [T],
) {
    let n = r.len();
    if n == 0 || m == 0 || kdim == 0 {
        return;
    }
    assert!(dout.len() >= (m - 1) * t + r.end && b.len() >= (kdim - 1) * bs + n && dw.len() >= m * kdim);
    unsafe {
        T::gemm(
            m,
            n,
            kdim,
            T::one(),
            dout.as_ptr().add(r.start),
            t as isize,
            1,
            b.as_ptr(),
            1,
            bs as isize,
            T::one(),
            dw.as_mut_ptr(),
            kdim as isize,
            1,
        );
    }
}

/// `db (+)= w^T . dout[:, r]`, `db` being `kdim x n` with row stride `ds`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul_grad_input<T: Scalar>(
    w: &[T],
    m: usize,
    kdim: usize,
    dout: &[T],
    t: usize,
    r: &Range<usize>,
    db: &mut [T],
    ds: usize,
    accumulate: bool,
) {
    let n = r.len();
    if n == 0 || m == 0 || kdim == 0 {
        return;
    }
    assert!(w.len() >= m * kdim && dout.len() >= (m - 1) * t + r.end && db.len() >= (kdim - 1) * ds + n);
    let beta = if accumulate { T::one() } else { T::zero() };
    unsafe {
        T::gemm(
            kdim,
            m,
            n,
            T::one(),
            w.as_ptr(),
            1,
            kdim as isize,
            dout.as_ptr().add(r.start),
            t as isize,
            1,
            beta,
            db.as_mut_ptr(),
            ds as isize,
            1,
        );
    }
}

pub(crate) fn add_row_bias<T: Scalar>(out: &mut [T], bias: &[T], t: usize, r: &Range<usize>) {
    for (f, &b) in bias.iter().enumerate() {
        out[f * t + r.start..f * t + r.end].iter_mut().for_each(|v| *v = *v + b);
    }
}

pub(crate) fn row_sums_add<T: Scalar>(x: &[T], rows: usize, t: usize, r: &Range<usize>, acc: &mut [T]) {
    for (f, a) in acc.iter_mut().enumerate().take(rows) {
        *a = *a + x[f * t + r.start..f * t + r.end].iter().copied().sum::<T>();
    }
}

/// Per-column layer normalization over `c` channels. `z` is overwritten with
/// the normalized values, `out` receives `gain * zhat + bias`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn ln_forward<T: Scalar>(
    z: &mut [T],
    c: usize,
    t: usize,
    r: &Range<usize>,
    gain: &[T],
    bias: &[T],
    out: &mut [T],
    inv_std: &mut [T],
    mean: &mut [T],
) {
    let inv_c = T::one() / T::from_f64(c as f64);
    let eps = T::from_f64(LN_EPS);
    let mean = &mut mean[r.clone()];
    let var = &mut inv_std[r.clone()];
    mean.fill(T::zero());
    var.fill(T::zero());
    for ci in 0..c {
        for (m, &v) in mean.iter_mut().zip(&z[ci * t + r.start..ci * t + r.end]) {
            *m = *m + v;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m * inv_c);
    for ci in 0..c {
        let row = &z[ci * t + r.start..ci * t + r.end];
        for ((s, &v), &m) in var.iter_mut().zip(row).zip(mean.iter()) {
            let d = v - m;
            *s = *s + d * d;
        }
    }
    var.iter_mut().for_each(|s| *s = T::one() / (*s * inv_c + eps).sqrt());
    for ci in 0..c {
        let (g, b) = (gain[ci], bias[ci]);
        let zr = &mut z[ci * t + r.start..ci * t + r.end];
        let or = &mut out[ci * t + r.start..ci * t + r.end];
        for (((zv, o), &m), &inv) in zr.iter_mut().zip(or.iter_mut()).zip(mean.iter()).zip(var.iter()) {
            let xh = (*zv - m) * inv;
            *zv = xh;
            *o = g * xh + b;
        }
    }
}

/// Backward of [`ln_forward`]; writes `dz` and accumulates gain/bias grads.
#[allow(clippy::too_many_arguments)]
pub(crate) fn ln_backward<T: Scalar>(
    dout: &[T],
    xhat: &[T],
    inv_std: &[T],
    gain: &[T],
    c: usize,
    t: usize,
    r: &Range<usize>,
    dz: &mut [T],
    dgain: &mut [T],
    dbias: &mut [T],
    s1: &mut [T],
    s2: &mut [T],
) {
    let inv_c = T::one() / T::from_f64(c as f64);
    let s1 = &mut s1[r.clone()];
    let s2 = &mut s2[r.clone()];
    s1.fill(T::zero());
    s2.fill(T::zero());
    for ci in 0..c {
        let g = gain[ci];
        let d = &dout[ci * t + r.start..ci * t + r.end];
        let x = &xhat[ci * t + r.start..ci * t + r.end];
        let (mut dg, mut db) = (T::zero(), T::zero());
        for (((a, b), &dv), &xv) in s1.iter_mut().zip(s2.iter_mut()).zip(d).zip(x) {
            let dxh = dv * g;
            *a = *a + dxh;
            *b = *b + dxh * xv;
            dg = dg + dv * xv;
            db = db + dv;
        }
        dgain[ci] = dgain[ci] + dg;
        dbias[ci] = dbias[ci] + db;
    }
    for ci in 0..c {
        let g = gain[ci];
        let d = &dout[ci * t + r.start..ci * t + r.end];
        let x = &xhat[ci * t + r.start..ci * t + r.end];
        let o = &mut dz[ci * t + r.start..ci * t + r.end];
        for ((((o, &dv), &xv), (&a, &b)), &inv) in o
            .iter_mut()
            .zip(d)
            .zip(x)
            .zip(s1.iter().zip(s2.iter()))
            .zip(&inv_std[r.clone()])
        {
            *o = inv * (dv * g - a * inv_c - xv * b * inv_c);
        }
    }
}

/// `dy * (1 - a^2)` over the range, in place on `dy`.
pub(crate) fn tanh_backward_inplace<T: Scalar>(dy: &mut [T], a: &[T], rows: usize, t: usize, r: &Range<usize>) {
    for f in 0..rows {
        let s = f * t + r.start..f * t + r.end;
        for (d, &y) in dy[s.clone()].iter_mut().zip(&a[s]) {
            *d = *d * (T::one() - y * y);
        }
    }
}

pub(crate) fn selu<T: Scalar>(x: T) -> T {
    let l = T::from_f64(SELU_LAMBDA);
    if x > T::zero() {
        l * x
    } else {
        l * T::from_f64(SELU_ALPHA) * (x.exp() - T::one())
    }
}

pub(crate) fn selu_grad<T: Scalar>(x: T) -> T {
    let l = T::from_f64(SELU_LAMBDA);
    if x > T::zero() {
        l
    } else {
        l * T::from_f64(SELU_ALPHA) * x.exp()
    }
}

/// `V[f, c, k] = sum_j W[f, c m + j] h[c, j, k]`.
pub(crate) fn fold_separable<T: Scalar>(w: &[T], h: &[T], f: usize, c: usize, m: usize, k: usize, v: &mut [T]) {
    for fi in 0..f {
        for ci in 0..c {
            for kk in 0..k {
                let mut acc = T::zero();
                for j in 0..m {
                    acc = acc + w[fi * c * m + ci * m + j] * h[(ci * m + j) * k + kk];
                }
                v[(fi * c + ci) * k + kk] = acc;
            }
        }
    }
}

/// Accumulates the pointwise and depthwise gradients implied by `dv`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn unfold_separable_grad<T: Scalar>(
    w: &[T],
    h: &[T],
    dv: &[T],
    f: usize,
    c: usize,
    m: usize,
    k: usize,
    dw: &mut [T],
    dh: &mut [T],
) {
    for fi in 0..f {
        for ci in 0..c {
            let dvr = &dv[(fi * c + ci) * k..(fi * c + ci + 1) * k];
            for j in 0..m {
                let hr = &h[(ci * m + j) * k..(ci * m + j + 1) * k];
                let wv = w[fi * c * m + ci * m + j];
                let mut acc = T::zero();
                for kk in 0..k {
                    acc = acc + dvr[kk] * hr[kk];
                    dh[(ci * m + j) * k + kk] = dh[(ci * m + j) * k + kk] + dvr[kk] * wv;
                }
                dw[fi * c * m + ci * m + j] = dw[fi * c * m + ci * m + j] + acc;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn im2col_shifts_and_pads() {
        // one channel, t = 6, k = 3, d = 2, full range
        let x: Vec<f64> = (1..=6).map(f64::from).collect();
        let mut col = vec![9.0; 18];
        im2col(&x, 1, 6, 3, 2, &(0..6), &mut col);
        assert_eq!(&col[0..6], &[0.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(&col[6..12], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(&col[12..18], &[3.0, 4.0, 5.0, 6.0, 0.0, 0.0]);
        // sub-range
        let mut col = vec![9.0; 6];
        im2col(&x, 1, 6, 3, 2, &(2..4), &mut col);
        assert_eq!(col, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        // dilation wider than the frame
        let mut col = vec![9.0; 6];
        im2col(&x[..2], 1, 2, 3, 5, &(0..2), &mut col);
        assert_eq!(col, vec![0.0, 0.0, 1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn col2im_is_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let x: Vec<f64> = (0..14).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..2 * 3 * 5).map(|i| (i as f64 * 1.3).cos()).collect();
        let r = 1..6;
        let mut col = vec![0.0; 30];
        im2col(&x, 2, 7, 3, 2, &r, &mut col);
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut dx = vec![0.0; 14];
        col2im_add(&y, 2, 7, 3, 2, &r, &mut dx);
        let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn selu_values() {
        assert_eq!(selu(0.0f64), 0.0);
        assert!((selu(1.0f64) - SELU_LAMBDA).abs() < 1e-15);
        assert!((selu(-50.0f64) + SELU_LAMBDA * SELU_ALPHA).abs() < 1e-12);
    }
}
