//! Single-precision inference path. Width-3 dilated convolutions use the
//! Winograd F(4,3) transform on whole tiles (6 multiplies per 4 outputs
//! instead of 12) with a direct convolution for the ragged end, and bias,
//! layer norm, tanh and the residual add run as one pass over cache-sized
//! column blocks. Results agree with [`Model::forward`] to rounding.

use std::ops::Range;

use crate::kernels::{self, LN_EPS};
use crate::model::Plan;
use crate::scalar::fast_tanh;
use crate::{Model, ModelSpec, Result};

const BLOCK: usize = 64;
const CHUNK: usize = 256;
const TRANSFORMS: usize = 6;

struct Layer {
    c: usize,
    d: usize,
    /// Transformed kernels, `TRANSFORMS` matrices of `[f, c]`, when `k = 3`.
    winograd: Option<Vec<f32>>,
    /// Folded kernel `[f, c, k]`.
    folded: Vec<f32>,
    bias: Vec<f32>,
    gain: Vec<f32>,
    shift: Vec<f32>,
    skip: Option<Vec<f32>>,
}

pub(crate) struct FastModel {
    spec: ModelSpec,
    layers: Vec<Layer>,
    energy_gain: Vec<f32>,
    energy_bias: Vec<f32>,
    head_weight: Vec<f32>,
    head_bias: Vec<f32>,
}

/// Activation buffers. Rows have stride `t + 2 pad` with `pad` zeros on
/// both sides, so convolution taps past either end of the frame read zeros
/// without bounds tests.
pub(crate) struct Buffers {
    plan: Plan,
    pad: usize,
    stride: usize,
    input: Vec<f32>,
    ring: Vec<Vec<f32>>,
    x: Vec<f32>,
    z: Vec<f32>,
    u: Vec<f32>,
    m: Vec<f32>,
    col: Vec<f32>,
    mean: Vec<f32>,
    inv: Vec<f32>,
    pooled: Vec<f32>,
    energy: Vec<f32>,
    pub out: Vec<f32>,
}

impl Buffers {
    pub fn new(spec: &ModelSpec, t: usize) -> Result<Self> {
        let plan = Plan::new(spec, t)?;
        let f = spec.n_f;
        let cmax = spec.n_channels.max(f);
        let dmax = spec.dilations.iter().copied().max().unwrap_or(1);
        let pad = dmax * (spec.kernel_width / 2).max(1);
        let stride = t + 2 * pad;
        let tiles = CHUNK.max(4 * dmax) / 4;
        let z = |n: usize| vec![0.0f32; n];
        Ok(Self {
            plan,
            pad,
            stride,
            input: z(spec.n_channels * stride),
            ring: vec![z(f * stride); spec.layers_per_bank() + 1],
            x: z(f * stride),
            z: z(f * stride),
            u: z(TRANSFORMS * cmax * tiles),
            m: z(TRANSFORMS * f * tiles),
            col: z(cmax * spec.kernel_width * t),
            mean: z(BLOCK),
            inv: z(BLOCK),
            pooled: z(f),
            energy: z(f),
            out: z(spec.head.n_outputs()),
        })
    }

    pub fn frame_len(&self) -> usize {
        self.plan.t
    }
}

/// `G g` for one width-3 kernel.
fn transform_kernel(g: [f32; 3]) -> [f32; TRANSFORMS] {
    let [g0, g1, g2] = g.map(f64::from);
    [
        g0 / 4.0,
        -(g0 + g1 + g2) / 6.0,
        -(g0 - g1 + g2) / 6.0,
        g0 / 24.0 + g1 / 12.0 + g2 / 6.0,
        g0 / 24.0 - g1 / 12.0 + g2 / 6.0,
        g2,
    ]
    .map(|v| v as f32)
}

impl FastModel {
    pub fn new(model: &Model<f32>) -> Self {
        let spec = model.spec().clone();
        let prep = model.prepare();
        let p = model.params();
        let ly = model.layout();
        let f = spec.n_f;
        let layers = ly
            .layers
            .iter()
            .enumerate()
            .map(|(l, s)| {
                let c = spec.in_channels(l);
                let folded = prep.folded[l].clone();
                let winograd = (spec.kernel_width == 3).then(|| {
                    let mut g = vec![0.0; TRANSFORMS * f * c];
                    for (i, taps) in folded.chunks_exact(3).enumerate() {
                        for (xi, v) in transform_kernel([taps[0], taps[1], taps[2]]).into_iter().enumerate() {
                            g[xi * f * c + i] = v;
                        }
                    }
                    g
                });
                Layer {
                    c,
                    d: spec.dilation(l),
                    winograd,
                    folded,
                    bias: p[s.pointwise_bias.clone()].to_vec(),
                    gain: p[s.ln_gain.clone()].to_vec(),
                    shift: p[s.ln_bias.clone()].to_vec(),
                    skip: s.skip.clone().map(|r| p[r].to_vec()),
                }
            })
            .collect();
        Self {
            layers,
            energy_gain: p[ly.energy_gain.clone()].to_vec(),
            energy_bias: p[ly.energy_bias.clone()].to_vec(),
            head_weight: p[ly.head_weight.clone()].to_vec(),
            head_bias: p[ly.head_bias.clone()].to_vec(),
            spec,
        }
    }

    /// Head output for a channel-major `n_channels x t` input, `t` being the
    /// length the buffers were built for.
    pub fn forward(&self, x: &[f32], b: &mut Buffers) {
        #[cfg(target_arch = "x86_64")]
        {
            if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
                // SAFETY: the features were detected at runtime
                unsafe { self.forward_avx2(x, b) };
                return;
            }
        }
        self.forward_impl(x, b);
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn forward_avx2(&self, x: &[f32], b: &mut Buffers) {
        self.forward_impl(x, b);
    }

    #[inline(always)]
    fn forward_impl(&self, input: &[f32], b: &mut Buffers) {
        let s = &self.spec;
        let (f, t, pad, ts) = (s.n_f, b.plan.t, b.pad, b.stride);
        let nl = s.layers_per_bank();
        let slots = b.ring.len();
        for (ci, row) in input.chunks_exact(t).enumerate() {
            b.input[ci * ts + pad..ci * ts + pad + t].copy_from_slice(row);
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let (inp, out) = (b.plan.inp[l].clone(), b.plan.out[l].clone());
            // padded column ranges
            let (pin, pout) = (inp.start + pad..inp.end + pad, out.start + pad..out.end + pad);
            let mut y = std::mem::take(&mut b.ring[l % slots]);
            let xl: &[f32] = if l == 0 {
                &b.input
            } else if s.cross_bank_skips && l >= nl {
                let (p1, p2) = (&b.ring[(l - 1) % slots], &b.ring[(l - nl) % slots]);
                for ci in 0..f {
                    let r = ci * ts + pin.start..ci * ts + pin.end;
                    for ((o, u), v) in b.x[r.clone()].iter_mut().zip(&p1[r.clone()]).zip(&p2[r]) {
                        *o = *u + *v;
                    }
                }
                &b.x
            } else {
                &b.ring[(l - 1) % slots]
            };
            let (c, d, k) = (layer.c, layer.d, s.kernel_width);
            let skip = match &layer.skip {
                Some(p) => {
                    kernels::matmul_into(p, f, c, &xl[pout.start..], ts, &mut y, ts, &pout, false);
                    None
                }
                None => Some(xl),
            };
            // whole Winograd tiles in column chunks that stay in cache, then
            // the ragged end directly
            let mut at = pout.start;
            if let Some(g) = &layer.winograd {
                let per_chunk = (CHUNK / (4 * d)).max(1) * 4 * d;
                while pout.end - at >= 4 * d {
                    let r = at..at + per_chunk.min((pout.end - at) / (4 * d) * 4 * d);
                    winograd(g, xl, c, f, ts, d, &r, &mut b.u, &mut b.m, &mut b.z);
                    epilogue(layer, &mut b.z, skip, &mut y, f, ts, &r, &mut b.mean, &mut b.inv);
                    at = r.end;
                }
            }
            if at < pout.end {
                let r = at..pout.end;
                let n = r.len();
                let col = &mut b.col[..c * k * n];
                kernels::im2col(xl, c, ts, k, d, &r, col);
                kernels::matmul_into(&layer.folded, f, c * k, col, n, &mut b.z, ts, &r, false);
                epilogue(layer, &mut b.z, skip, &mut y, f, ts, &r, &mut b.mean, &mut b.inv);
            }
            b.ring[l % slots] = y;
        }
        let n_layers = self.layers.len();
        let last = &b.ring[(n_layers - 1) % slots];
        let crop = b.plan.out[n_layers - 1].clone();
        let inv_n = 1.0 / crop.len() as f32;
        for fi in 0..f {
            let row = &last[fi * ts + pad + crop.start..fi * ts + pad + crop.end];
            b.pooled[fi] = row.iter().map(|v| v * v).sum::<f32>() * inv_n;
        }
        let (mut mean, mut inv) = ([0.0f32], [0.0f32]);
        kernels::ln_forward(
            &mut b.pooled,
            f,
            1,
            &(0..1),
            &self.energy_gain,
            &self.energy_bias,
            &mut b.energy,
            &mut inv,
            &mut mean,
        );
        for e in b.energy.iter_mut() {
            *e = kernels::selu(*e);
        }
        for (o, out) in b.out.iter_mut().enumerate() {
            *out = self.head_bias[o]
                + self.head_weight[o * f..(o + 1) * f]
                    .iter()
                    .zip(&b.energy)
                    .map(|(w, e)| w * e)
                    .sum::<f32>();
        }
    }
}

/// Width-3 convolution at dilation `d` of `x` (`c` rows of stride `ts`,
/// zero beyond the frame) for the whole `4d`-blocks of range `r`, written
/// into `z`. Returns how many leading outputs of `r` were produced.
///
/// Tile `(blk, i)` produces outputs `p, p + d, p + 2d, p + 3d` with
/// `p = r.start + 4 d blk + i` from inputs `p - d, ..., p + 4d`.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn winograd(
    g: &[f32],
    x: &[f32],
    c: usize,
    f: usize,
    ts: usize,
    d: usize,
    r: &Range<usize>,
    u: &mut [f32],
    m: &mut [f32],
    z: &mut [f32],
) -> usize {
    let blocks = r.len() / (4 * d);
    let nt = blocks * d;
    if nt == 0 {
        return 0;
    }
    assert!(r.start >= d && r.start + 4 * d * blocks + d <= ts);
    let u = &mut u[..TRANSFORMS * c * nt];
    // SAFETY: the assert above bounds every read by `ts` within each of the
    // `c` rows of `x`, and writes stay below `TRANSFORMS * c * nt`
    assert!(x.len() >= c * ts);
    let (xp, up) = (x.as_ptr(), u.as_mut_ptr());
    let plane = c * nt;
    for ci in 0..c {
        for blk in 0..blocks {
            unsafe {
                let src = xp.add(ci * ts + r.start + 4 * d * blk - d);
                let dst = up.add(ci * nt + blk * d);
                for i in 0..d {
                    let d0 = *src.add(i);
                    let d1 = *src.add(d + i);
                    let d2 = *src.add(2 * d + i);
                    let d3 = *src.add(3 * d + i);
                    let d4 = *src.add(4 * d + i);
                    let d5 = *src.add(5 * d + i);
                    *dst.add(i) = 4.0 * d0 - 5.0 * d2 + d4;
                    *dst.add(plane + i) = -4.0 * (d1 + d2) + d3 + d4;
                    *dst.add(2 * plane + i) = 4.0 * (d1 - d2) - d3 + d4;
                    *dst.add(3 * plane + i) = 2.0 * (d3 - d1) - d2 + d4;
                    *dst.add(4 * plane + i) = 2.0 * (d1 - d3) - d2 + d4;
                    *dst.add(5 * plane + i) = 4.0 * d1 - 5.0 * d3 + d5;
                }
            }
        }
    }
    let m = &mut m[..TRANSFORMS * f * nt];
    for xi in 0..TRANSFORMS {
        kernels::matmul_into(
            &g[xi * f * c..(xi + 1) * f * c],
            f,
            c,
            &u[xi * c * nt..],
            nt,
            &mut m[xi * f * nt..(xi + 1) * f * nt],
            nt,
            &(0..nt),
            false,
        );
    }
    // SAFETY: outputs land in columns `r.start..r.start + 4 d blocks` of
    // the `f` rows of `z`, reads stay below `TRANSFORMS * f * nt`
    assert!(z.len() >= (f - 1) * ts + r.start + 4 * d * blocks);
    let (mp, zp) = (m.as_ptr(), z.as_mut_ptr());
    let plane = f * nt;
    for fi in 0..f {
        for blk in 0..blocks {
            unsafe {
                let src = mp.add(fi * nt + blk * d);
                let dst = zp.add(fi * ts + r.start + 4 * d * blk);
                for i in 0..d {
                    let a = *src.add(i);
                    let (b, c) = (*src.add(plane + i), *src.add(2 * plane + i));
                    let (e, h) = (*src.add(3 * plane + i), *src.add(4 * plane + i));
                    let k = *src.add(5 * plane + i);
                    let (sp, sm) = (b + c, b - c);
                    let (tp, tm) = (e + h, e - h);
                    *dst.add(i) = a + sp + tp;
                    *dst.add(d + i) = sm + 2.0 * tm;
                    *dst.add(2 * d + i) = sp + 4.0 * tp;
                    *dst.add(3 * d + i) = sm + 8.0 * tm + k;
                }
            }
        }
    }
    4 * d * blocks
}

/// `y = skip + tanh(LN(z + bias))` over the range, one column block at a
/// time; with no `skip` the result is added to `y`.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn epilogue(
    layer: &Layer,
    z: &mut [f32],
    skip: Option<&[f32]>,
    y: &mut [f32],
    f: usize,
    ts: usize,
    r: &Range<usize>,
    mean: &mut [f32],
    inv: &mut [f32],
) {
    let inv_f = 1.0 / f as f32;
    let mut j0 = r.start;
    while j0 < r.end {
        let j1 = (j0 + BLOCK).min(r.end);
        let w = j1 - j0;
        let (mean, inv) = (&mut mean[..w], &mut inv[..w]);
        mean.fill(0.0);
        for fi in 0..f {
            let b = layer.bias[fi];
            for (m, v) in mean.iter_mut().zip(&mut z[fi * ts + j0..fi * ts + j1]) {
                *v += b;
                *m += *v;
            }
        }
        mean.iter_mut().for_each(|m| *m *= inv_f);
        inv.fill(0.0);
        for fi in 0..f {
            for ((s, v), m) in inv.iter_mut().zip(&z[fi * ts + j0..fi * ts + j1]).zip(mean.iter()) {
                let e = v - m;
                *s += e * e;
            }
        }
        inv.iter_mut()
            .for_each(|s| *s = 1.0 / (*s * inv_f + LN_EPS as f32).sqrt());
        for fi in 0..f {
            let (g, sh) = (layer.gain[fi], layer.shift[fi]);
            let cols = fi * ts + j0..fi * ts + j1;
            let zr = &z[cols.clone()];
            let yr = &mut y[cols.clone()];
            match skip {
                Some(x) => {
                    for ((((o, v), m), s), a) in yr.iter_mut().zip(zr).zip(mean.iter()).zip(inv.iter()).zip(&x[cols]) {
                        *o = a + fast_tanh(g * ((v - m) * s) + sh);
                    }
                }
                None => {
                    for (((o, v), m), s) in yr.iter_mut().zip(zr).zip(mean.iter()).zip(inv.iter()) {
                        *o += fast_tanh(g * ((v - m) * s) + sh);
                    }
                }
            }
        }
        j0 = j1;
    }
}
