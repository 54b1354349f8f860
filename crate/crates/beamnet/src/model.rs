use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::kernels;
use crate::spec::{Head, ModelSpec, ParamKind, ParamLayout};
use crate::{Error, NdArray, Result, Scalar};

pub const INIT_STD: f64 = 0.1;

/// Network parameters for one [`ModelSpec`], stored as a flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    spec: ModelSpec,
    layout: ParamLayout,
    params: Vec<T>,
}

/// Truncated normal draw, rejecting samples beyond two standard deviations.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    let normal = Normal::new(0.0, std).expect("positive std");
    loop {
        let v: f64 = normal.sample(rng);
        if v.abs() <= 2.0 * std {
            return v;
        }
    }
}

impl<T: Scalar> Model<T> {
    /// Weights from a truncated normal (std 0.1), biases 0, gains 1.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let layout = ParamLayout::new(&spec);
        let mut rng = beamlab_core::rng::stream_rng(seed, beamlab_core::rng::domain::INIT, 0);
        let mut params = vec![T::zero(); layout.n_params()];
        for e in &layout.entries {
            for p in &mut params[e.range()] {
                *p = match e.kind {
                    ParamKind::Weight => T::from_f64(truncated_normal(&mut rng, INIT_STD)),
                    ParamKind::Bias => T::zero(),
                    ParamKind::Gain => T::one(),
                };
            }
        }
        Ok(Self { spec, layout, params })
    }

    pub fn from_params(spec: ModelSpec, params: Vec<T>) -> Result<Self> {
        spec.validate()?;
        let layout = ParamLayout::new(&spec);
        if params.len() != layout.n_params() {
            return Err(Error::Shape(format!(
                "spec needs {} parameters, got {}",
                layout.n_params(),
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i} is not finite")));
        }
        Ok(Self { spec, layout, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn param(&self, name: &str) -> Option<NdArray<T>> {
        let e = self.layout.get(name)?;
        NdArray::new(&e.shape, self.params[e.range()].to_vec()).ok()
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            spec: self.spec.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|v| U::from_f64(Scalar::to_f64(*v))).collect(),
        }
    }

    pub(crate) fn prepare(&self) -> Prepared<T> {
        let s = &self.spec;
        let folded = self
            .layout
            .layers
            .iter()
            .enumerate()
            .map(|(l, slots)| {
                let c = s.in_channels(l);
                let mut v = vec![T::zero(); s.n_f * c * s.kernel_width];
                kernels::fold_separable(
                    &self.params[slots.pointwise.clone()],
                    &self.params[slots.depthwise.clone()],
                    s.n_f,
                    c,
                    s.multiplier,
                    s.kernel_width,
                    &mut v,
                );
                v
            })
            .collect();
        Prepared { folded }
    }

    fn check_input(&self, x: &[T], t: usize) -> Result<()> {
        if x.len() != self.spec.n_channels * t {
            return Err(Error::Shape(format!(
                "input has {} values, expected {} channels x {t}",
                x.len(),
                self.spec.n_channels
            )));
        }
        Ok(())
    }

    /// Head output (logits or unit-circle coordinates) for one
    /// channel-major `n_channels x t` input.
    pub fn forward(&self, x: &[T], t: usize) -> Result<Vec<T>> {
        self.check_input(x, t)?;
        let mut tape = Tape::new(&self.spec, t)?;
        self.forward_tape(&self.prepare(), x, &mut tape);
        Ok(tape.out.clone())
    }

    /// Output of the filterbank stack, `[n_f, t]`. Only the valid region
    /// (the receptive-field crop) is computed; other columns are zero.
    pub fn filterbank_output(&self, x: &[T], t: usize) -> Result<NdArray<T>> {
        self.check_input(x, t)?;
        let mut tape = Tape::new(&self.spec, t)?;
        self.forward_tape(&self.prepare(), x, &mut tape);
        let last = self.spec.n_layers() - 1;
        let mut s = NdArray::zeros(&[self.spec.n_f, t]);
        let r = &tape.plan.out[last];
        for f in 0..self.spec.n_f {
            s.data_mut()[f * t + r.start..f * t + r.end]
                .copy_from_slice(&tape.ys[last][f * t + r.start..f * t + r.end]);
        }
        Ok(s)
    }

    /// Loss of one example and its gradient in parameter layout, plus the
    /// gradient with respect to the input.
    pub fn loss_and_grad(&self, x: &[T], t: usize, theta: f64) -> Result<(T, Vec<T>, Vec<T>)> {
        self.check_input(x, t)?;
        let prep = self.prepare();
        let mut tape = Tape::new(&self.spec, t)?;
        self.forward_tape(&prep, x, &mut tape);
        let (loss, dout) = self.head_loss(&tape.out, theta)?;
        let gl = GradLayout::new(&self.spec);
        let mut g = vec![T::zero(); gl.len];
        self.backward_tape(&prep, &mut tape, &dout, &mut g, &gl);
        let dx = tape.dx[..self.spec.n_channels * t].to_vec();
        Ok((loss, self.unfold_grad(&g, &gl), dx))
    }

    pub fn loss(&self, x: &[T], t: usize, theta: f64) -> Result<T> {
        let out = self.forward(x, t)?;
        Ok(self.head_loss(&out, theta)?.0)
    }

    /// Per-example loss and its gradient with respect to the head output.
    pub(crate) fn head_loss(&self, out: &[T], theta: f64) -> Result<(T, Vec<T>)> {
        match self.spec.head {
            Head::Regression => {
                let target = beamlab_core::dataset::unit_label(theta);
                let d0 = out[0] - T::from_f64(target[0]);
                let d1 = out[1] - T::from_f64(target[1]);
                let two = T::from_f64(2.0);
                Ok((d0 * d0 + d1 * d1, vec![two * d0, two * d1]))
            }
            Head::Classification { n_classes } => {
                let (label, _) = beamlab_core::classify_azimuth(theta, n_classes)?;
                let max = out.iter().copied().fold(T::neg_infinity(), T::max);
                let sum: T = out.iter().map(|v| (*v - max).exp()).sum();
                let lse = max + sum.ln();
                let grad = out
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (*v - lse).exp() - if i == label { T::one() } else { T::zero() })
                    .collect();
                Ok((lse - out[label], grad))
            }
        }
    }

    pub(crate) fn forward_tape(&self, prep: &Prepared<T>, x: &[T], tape: &mut Tape<T>) {
        let s = &self.spec;
        let (f, k, t) = (s.n_f, s.kernel_width, tape.plan.t);
        let nl = s.layers_per_bank();
        tape.xs[0][..x.len()].copy_from_slice(x);
        for l in 0..s.n_layers() {
            let slots = &self.layout.layers[l];
            let c = s.in_channels(l);
            let d = s.dilation(l);
            let (inp, out) = (tape.plan.inp[l].clone(), tape.plan.out[l].clone());
            if l > 0 {
                let xl = &mut tape.xs[l];
                for ci in 0..c {
                    let row = ci * t + inp.start..ci * t + inp.end;
                    xl[row.clone()].copy_from_slice(&tape.ys[l - 1][row.clone()]);
                    if s.cross_bank_skips && l >= nl {
                        for (a, b) in xl[row.clone()].iter_mut().zip(&tape.ys[l - nl][row]) {
                            *a = *a + *b;
                        }
                    }
                }
            }
            let n = out.len();
            let col = &mut tape.col[..c * k * n];
            kernels::im2col(&tape.xs[l], c, t, k, d, &out, col);
            let z = &mut tape.xhat[l];
            kernels::matmul_into(&prep.folded[l], f, c * k, col, n, z, t, &out, false);
            kernels::add_row_bias(z, &self.params[slots.pointwise_bias.clone()], t, &out);
            kernels::ln_forward(
                z,
                f,
                t,
                &out,
                &self.params[slots.ln_gain.clone()],
                &self.params[slots.ln_bias.clone()],
                &mut tape.act[l],
                &mut tape.inv_std[l],
                &mut tape.mean,
            );
            for fi in 0..f {
                T::tanh_inplace(&mut tape.act[l][fi * t + out.start..fi * t + out.end]);
            }
            let y = &mut tape.ys[l];
            match &slots.skip {
                Some(p) => {
                    kernels::matmul_into(
                        &self.params[p.clone()],
                        f,
                        c,
                        &tape.xs[l][out.start..],
                        t,
                        y,
                        t,
                        &out,
                        false,
                    );
                }
                None => {
                    for fi in 0..f {
                        let r = fi * t + out.start..fi * t + out.end;
                        y[r.clone()].copy_from_slice(&tape.xs[l][r]);
                    }
                }
            }
            for fi in 0..f {
                let r = fi * t + out.start..fi * t + out.end;
                for (a, b) in y[r.clone()].iter_mut().zip(&tape.act[l][r]) {
                    *a = *a + *b;
                }
            }
        }
        // pseudo-energy over the valid region
        let last = s.n_layers() - 1;
        let crop = tape.plan.out[last].clone();
        let inv_n = T::one() / T::from_f64(crop.len() as f64);
        for fi in 0..f {
            let row = &tape.ys[last][fi * t + crop.start..fi * t + crop.end];
            tape.e_xhat[fi] = row.iter().map(|v| *v * *v).sum::<T>() * inv_n;
        }
        tape.pooled.copy_from_slice(&tape.e_xhat);
        kernels::ln_forward(
            &mut tape.e_xhat,
            f,
            1,
            &(0..1),
            &self.params[self.layout.energy_gain.clone()],
            &self.params[self.layout.energy_bias.clone()],
            &mut tape.e_u,
            &mut tape.e_inv,
            &mut tape.e_mean,
        );
        for (e, &u) in tape.energy.iter_mut().zip(&tape.e_u) {
            *e = kernels::selu(u);
        }
        let w = &self.params[self.layout.head_weight.clone()];
        let b = &self.params[self.layout.head_bias.clone()];
        for (o, out) in tape.out.iter_mut().enumerate() {
            *out = b[o]
                + w[o * f..(o + 1) * f]
                    .iter()
                    .zip(&tape.energy)
                    .map(|(a, e)| *a * *e)
                    .sum::<T>();
        }
    }

    /// Accumulates into `g` (folded layout) the gradient for output
    /// gradient `dout`; leaves the input gradient in `tape.dx`.
    pub(crate) fn backward_tape(
        &self,
        prep: &Prepared<T>,
        tape: &mut Tape<T>,
        dout: &[T],
        g: &mut [T],
        gl: &GradLayout,
    ) {
        let s = &self.spec;
        let (f, k, t) = (s.n_f, s.kernel_width, tape.plan.t);
        let nl = s.layers_per_bank();
        let n_layers = s.n_layers();
        // head
        let w = &self.params[self.layout.head_weight.clone()];
        for (o, &d) in dout.iter().enumerate() {
            for (gw, e) in g[gl.head_weight.clone()][o * f..(o + 1) * f]
                .iter_mut()
                .zip(&tape.energy)
            {
                *gw = *gw + d * *e;
            }
            g[gl.head_bias.start + o] = g[gl.head_bias.start + o] + d;
        }
        for fi in 0..f {
            let de: T = (0..dout.len()).map(|o| w[o * f + fi] * dout[o]).sum();
            tape.e_du[fi] = de * kernels::selu_grad(tape.e_u[fi]);
        }
        {
            let (ga, gb) = split_pair(g, &gl.energy_gain, &gl.energy_bias);
            kernels::ln_backward(
                &tape.e_du,
                &tape.e_xhat,
                &tape.e_inv,
                &self.params[self.layout.energy_gain.clone()],
                f,
                1,
                &(0..1),
                &mut tape.e_dpooled,
                ga,
                gb,
                &mut tape.e_s1,
                &mut tape.e_s2,
            );
        }
        let last = n_layers - 1;
        for l in 0..n_layers {
            let r = tape.plan.out[l].clone();
            for fi in 0..f {
                tape.dys[l][fi * t + r.start..fi * t + r.end].fill(T::zero());
            }
        }
        let crop = tape.plan.out[last].clone();
        let scale = T::from_f64(2.0 / crop.len() as f64);
        for fi in 0..f {
            let dp = tape.e_dpooled[fi] * scale;
            let r = fi * t + crop.start..fi * t + crop.end;
            for (d, &y) in tape.dys[last][r.clone()].iter_mut().zip(&tape.ys[last][r]) {
                *d = dp * y;
            }
        }
        for l in (0..n_layers).rev() {
            let slots = &self.layout.layers[l];
            let gs = &gl.layers[l];
            let c = s.in_channels(l);
            let d = s.dilation(l);
            let (inp, out) = (tape.plan.inp[l].clone(), tape.plan.out[l].clone());
            let n = out.len();
            for ci in 0..c {
                tape.dx[ci * t + inp.start..ci * t + inp.end].fill(T::zero());
            }
            let dy = &tape.dys[l];
            match &slots.skip {
                Some(p) => {
                    kernels::matmul_grad_weight(
                        dy,
                        f,
                        t,
                        &out,
                        &tape.xs[l][out.start..],
                        t,
                        c,
                        &mut g[gs.skip.clone().unwrap()],
                    );
                    kernels::matmul_grad_input(
                        &self.params[p.clone()],
                        f,
                        c,
                        dy,
                        t,
                        &out,
                        &mut tape.dx[out.start..],
                        t,
                        true,
                    );
                }
                None => {
                    for fi in 0..f {
                        let r = fi * t + out.start..fi * t + out.end;
                        for (a, b) in tape.dx[r.clone()].iter_mut().zip(&dy[r]) {
                            *a = *a + *b;
                        }
                    }
                }
            }
            for fi in 0..f {
                let r = fi * t + out.start..fi * t + out.end;
                tape.du[r.clone()].copy_from_slice(&dy[r]);
            }
            kernels::tanh_backward_inplace(&mut tape.du, &tape.act[l], f, t, &out);
            {
                let (ga, gb) = split_pair(g, &gs.ln_gain, &gs.ln_bias);
                kernels::ln_backward(
                    &tape.du,
                    &tape.xhat[l],
                    &tape.inv_std[l],
                    &self.params[slots.ln_gain.clone()],
                    f,
                    t,
                    &out,
                    &mut tape.dz,
                    ga,
                    gb,
                    &mut tape.s1,
                    &mut tape.s2,
                );
            }
            kernels::row_sums_add(&tape.dz, f, t, &out, &mut g[gs.pointwise_bias.clone()]);
            let col = &mut tape.col[..c * k * n];
            kernels::im2col(&tape.xs[l], c, t, k, d, &out, col);
            kernels::matmul_grad_weight(&tape.dz, f, t, &out, col, n, c * k, &mut g[gs.folded.clone()]);
            kernels::matmul_grad_input(&prep.folded[l], f, c * k, &tape.dz, t, &out, col, n, false);
            kernels::col2im_add(col, c, t, k, d, &out, &mut tape.dx);
            if l > 0 {
                for ci in 0..c {
                    let r = ci * t + inp.start..ci * t + inp.end;
                    for (a, b) in tape.dys[l - 1][r.clone()].iter_mut().zip(&tape.dx[r.clone()]) {
                        *a = *a + *b;
                    }
                    if s.cross_bank_skips && l >= nl {
                        for (a, b) in tape.dys[l - nl][r.clone()].iter_mut().zip(&tape.dx[r]) {
                            *a = *a + *b;
                        }
                    }
                }
            }
        }
    }

    /// Converts a folded-layout gradient to parameter layout.
    pub(crate) fn unfold_grad(&self, g: &[T], gl: &GradLayout) -> Vec<T> {
        let s = &self.spec;
        let mut out = vec![T::zero(); self.params.len()];
        for (l, (slots, gs)) in self.layout.layers.iter().zip(&gl.layers).enumerate() {
            let (dw, dh) = split_pair(&mut out, &slots.pointwise, &slots.depthwise);
            kernels::unfold_separable_grad(
                &self.params[slots.pointwise.clone()],
                &self.params[slots.depthwise.clone()],
                &g[gs.folded.clone()],
                s.n_f,
                s.in_channels(l),
                s.multiplier,
                s.kernel_width,
                dw,
                dh,
            );
            out[slots.pointwise_bias.clone()].copy_from_slice(&g[gs.pointwise_bias.clone()]);
            out[slots.ln_gain.clone()].copy_from_slice(&g[gs.ln_gain.clone()]);
            out[slots.ln_bias.clone()].copy_from_slice(&g[gs.ln_bias.clone()]);
            if let (Some(p), Some(q)) = (&slots.skip, &gs.skip) {
                out[p.clone()].copy_from_slice(&g[q.clone()]);
            }
        }
        let ly = &self.layout;
        out[ly.energy_gain.clone()].copy_from_slice(&g[gl.energy_gain.clone()]);
        out[ly.energy_bias.clone()].copy_from_slice(&g[gl.energy_bias.clone()]);
        out[ly.head_weight.clone()].copy_from_slice(&g[gl.head_weight.clone()]);
        out[ly.head_bias.clone()].copy_from_slice(&g[gl.head_bias.clone()]);
        out
    }
}

/// Two disjoint mutable sub-slices.
fn split_pair<'a, T>(v: &'a mut [T], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [T], &'a mut [T]) {
    if a.start < b.start {
        let (lo, hi) = v.split_at_mut(b.start);
        (&mut lo[a.clone()], &mut hi[..b.len()])
    } else {
        let (lo, hi) = v.split_at_mut(a.start);
        (&mut hi[..a.len()], &mut lo[b.clone()])
    }
}

/// Folded convolution kernels, computed once per parameter update.
pub(crate) struct Prepared<T> {
    pub folded: Vec<Vec<T>>,
}

pub(crate) struct GradSlots {
    pub folded: Range<usize>,
    pub pointwise_bias: Range<usize>,
    pub ln_gain: Range<usize>,
    pub ln_bias: Range<usize>,
    pub skip: Option<Range<usize>>,
}

/// Gradient layout with each layer's depthwise and pointwise kernels
/// replaced by their folded product.
pub(crate) struct GradLayout {
    pub layers: Vec<GradSlots>,
    pub energy_gain: Range<usize>,
    pub energy_bias: Range<usize>,
    pub head_weight: Range<usize>,
    pub head_bias: Range<usize>,
    pub len: usize,
}

impl GradLayout {
    pub fn new(spec: &ModelSpec) -> Self {
        let mut next = 0;
        let mut take = |n: usize| {
            let r = next..next + n;
            next += n;
            r
        };
        let f = spec.n_f;
        let layers = (0..spec.n_layers())
            .map(|l| {
                let c = spec.in_channels(l);
                GradSlots {
                    folded: take(f * c * spec.kernel_width),
                    pointwise_bias: take(f),
                    ln_gain: take(f),
                    ln_bias: take(f),
                    skip: spec.has_skip_projection(l).then(|| take(f * c)),
                }
            })
            .collect();
        let energy_gain = take(f);
        let energy_bias = take(f);
        let head_weight = take(spec.head.n_outputs() * f);
        let head_bias = take(spec.head.n_outputs());
        Self {
            layers,
            energy_gain,
            energy_bias,
            head_weight,
            head_bias,
            len: next,
        }
    }
}

/// Time ranges each layer must produce so that the final valid region is
/// exact. `out[l]` is computed; `inp[l]` is what the convolution reads.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Plan {
    pub t: usize,
    pub out: Vec<Range<usize>>,
    pub inp: Vec<Range<usize>>,
}

impl Plan {
    pub fn new(spec: &ModelSpec, t: usize) -> Result<Self> {
        let crop = spec.crop();
        if t <= 2 * crop {
            return Err(Error::Shape(format!(
                "{t} samples leave no valid output for receptive field {}",
                spec.receptive_field()
            )));
        }
        let n = spec.n_layers();
        let nl = spec.layers_per_bank();
        let h = spec.half_width();
        let mut out = vec![0..0; n];
        let mut inp = vec![0..0; n];
        for l in (0..n).rev() {
            let r = if l == n - 1 {
                crop..t - crop
            } else {
                let mut r = inp[l + 1].clone();
                if spec.cross_bank_skips && l + nl < n {
                    r = r.start.min(inp[l + nl].start)..r.end.max(inp[l + nl].end);
                }
                r
            };
            let reach = h * spec.dilation(l);
            inp[l] = r.start.saturating_sub(reach)..(r.end + reach).min(t);
            out[l] = r;
        }
        Ok(Self { t, out, inp })
    }
}

/// Activations saved by the forward pass plus backward scratch.
pub(crate) struct Tape<T> {
    pub plan: Plan,
    pub xs: Vec<Vec<T>>,
    pub xhat: Vec<Vec<T>>,
    pub act: Vec<Vec<T>>,
    pub ys: Vec<Vec<T>>,
    pub inv_std: Vec<Vec<T>>,
    pub mean: Vec<T>,
    pub col: Vec<T>,
    pub pooled: Vec<T>,
    pub e_xhat: Vec<T>,
    pub e_u: Vec<T>,
    pub e_inv: Vec<T>,
    pub e_mean: Vec<T>,
    pub energy: Vec<T>,
    pub out: Vec<T>,
    pub dys: Vec<Vec<T>>,
    pub dx: Vec<T>,
    pub du: Vec<T>,
    pub dz: Vec<T>,
    pub s1: Vec<T>,
    pub s2: Vec<T>,
    pub e_du: Vec<T>,
    pub e_dpooled: Vec<T>,
    pub e_s1: Vec<T>,
    pub e_s2: Vec<T>,
}

impl<T: Scalar> Tape<T> {
    pub fn new(spec: &ModelSpec, t: usize) -> Result<Self> {
        let plan = Plan::new(spec, t)?;
        let n = spec.n_layers();
        let f = spec.n_f;
        let cmax = spec.n_channels.max(f);
        let z = |len: usize| vec![T::zero(); len];
        let layer_bufs = |c_of: &dyn Fn(usize) -> usize| (0..n).map(|l| z(c_of(l) * t)).collect::<Vec<_>>();
        Ok(Self {
            xs: layer_bufs(&|l| spec.in_channels(l)),
            xhat: layer_bufs(&|_| f),
            act: layer_bufs(&|_| f),
            ys: layer_bufs(&|_| f),
            inv_std: layer_bufs(&|_| 1),
            dys: layer_bufs(&|_| f),
            mean: z(t),
            col: z(cmax * spec.kernel_width * t),
            pooled: z(f),
            e_xhat: z(f),
            e_u: z(f),
            e_inv: z(1),
            e_mean: z(1),
            energy: z(f),
            out: z(spec.head.n_outputs()),
            dx: z(cmax * t),
            du: z(f * t),
            dz: z(f * t),
            s1: z(t),
            s2: z(t),
            e_du: z(f),
            e_dpooled: z(f),
            e_s1: z(1),
            e_s2: z(1),
            plan,
        })
    }
}
