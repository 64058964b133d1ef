//! Differentiable network building blocks: strided "same" convolution,
//! 2x bilinear upsampling, bilinear backward warping and flow composition.
//!
//! Every out-of-range sample is clamped to the image rectangle.
//! Convolution is cross-correlation (no kernel flip).

use crate::autodiff::{BackwardCtx, Graph, Op, Real, Tensor, Var};
use crate::error::{shape_mismatch, Error, Result};
use crate::image::{Flow, Image};

/// One convolutional layer: odd `filter_size`, stride 1 or 2, optional ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filter_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub has_relu: bool,
}

impl ConvSpec {
    pub fn new(
        filter_size: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        has_relu: bool,
    ) -> Self {
        Self {
            filter_size,
            in_channels,
            out_channels,
            stride,
            has_relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.filter_size % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "filter size {} is not odd",
                self.filter_size
            )));
        }
        if self.stride != 1 && self.stride != 2 {
            return Err(Error::InvalidConfig(format!(
                "stride {} not in {{1, 2}}",
                self.stride
            )));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidConfig("channel counts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels,
            self.filter_size,
            self.filter_size,
        ]
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.filter_size * self.filter_size
    }
}

// ---------------------------------------------------------------- conv2d

struct Conv2d<T> {
    x: Var,
    w: Var,
    b: Var,
    /// im2col matrix, `K x P` with `K = Cin*f*f` and `P = Ho*Wo`; empty
    /// when the layer is evaluated directly.
    cols: Vec<T>,
    in_dims: (usize, usize, usize),
    out_dims: (usize, usize, usize),
    f: usize,
    stride: usize,
}

/// Output columns `j` whose input column `j*s + v - p` lies in `0..w`.
fn valid_cols(w: usize, wo: usize, s: usize, v: usize, p: usize) -> std::ops::Range<usize> {
    let lo = p.saturating_sub(v).div_ceil(s);
    let Some(last) = (w + p).checked_sub(v + 1) else {
        return lo..lo;
    };
    let hi = (last / s + 1).min(wo);
    lo..hi.max(lo)
}

fn im2col<T: Real>(x: &[T], (c, h, w): (usize, usize, usize), f: usize, s: usize) -> Vec<T> {
    let (ho, wo) = (h.div_ceil(s), w.div_ceil(s));
    let p = f / 2;
    let np = ho * wo;
    let mut cols = vec![T::zero(); c * f * f * np];
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for u in 0..f {
            for v in 0..f {
                let row = &mut cols[((ch * f + u) * f + v) * np..][..np];
                let js = valid_cols(w, wo, s, v, p);
                for i in 0..ho {
                    let r = i * s + u;
                    if r < p || r - p >= h {
                        continue;
                    }
                    let src = &plane[(r - p) * w..(r - p + 1) * w];
                    let dst = &mut row[i * wo..(i + 1) * wo];
                    if s == 1 {
                        let c0 = js.start + v - p;
                        dst[js.clone()].copy_from_slice(&src[c0..c0 + js.len()]);
                    } else {
                        for j in js.clone() {
                            dst[j] = src[j * s + v - p];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], dx: &mut [T], (c, h, w): (usize, usize, usize), f: usize, s: usize) {
    let (ho, wo) = (h.div_ceil(s), w.div_ceil(s));
    let p = f / 2;
    let np = ho * wo;
    for ch in 0..c {
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        for u in 0..f {
            for v in 0..f {
                let row = &cols[((ch * f + u) * f + v) * np..][..np];
                let js = valid_cols(w, wo, s, v, p);
                for i in 0..ho {
                    let r = i * s + u;
                    if r < p || r - p >= h {
                        continue;
                    }
                    let dst = &mut plane[(r - p) * w..(r - p + 1) * w];
                    let src = &row[i * wo..(i + 1) * wo];
                    for j in js.clone() {
                        dst[j * s + v - p] += src[j];
                    }
                }
            }
        }
    }
}

/// Layers with this few output channels skip im2col: a GEMM with so few
/// rows wastes most of each micro-kernel tile.
const DIRECT_MAX_COUT: usize = 4;

fn use_direct(cout: usize, stride: usize) -> bool {
    stride == 1 && cout <= DIRECT_MAX_COUT
}

/// Visit every `(o, ch, u, v)` tap with the output rows `i` whose input row
/// `i + u - p` exists, passing `(o, ch, u, v, i, input row, valid columns,
/// column offset sign)`. Stride 1 only.
fn direct_taps(
    (c, h, w): (usize, usize, usize),
    cout: usize,
    f: usize,
    mut visit: impl FnMut(usize, usize, usize, usize, usize, usize, std::ops::Range<usize>),
) {
    let p = f / 2;
    for o in 0..cout {
        for ch in 0..c {
            for u in 0..f {
                for v in 0..f {
                    let js = valid_cols(w, w, 1, v, p);
                    for i in 0..h {
                        let r = i + u;
                        if r < p || r - p >= h {
                            continue;
                        }
                        visit(o, ch, u, v, i, r - p, js.clone());
                    }
                }
            }
        }
    }
}

fn direct_forward<T: Real>(
    x: &[T],
    wt: &[T],
    dims: (usize, usize, usize),
    cout: usize,
    f: usize,
    out: &mut [T],
) {
    let (c, h, w) = dims;
    let p = f / 2;
    let n = h * w;
    direct_taps(dims, cout, f, |o, ch, u, v, i, r, js| {
        let k = wt[((o * c + ch) * f + u) * f + v];
        let src = &x[ch * n + r * w..][..w];
        let dst = &mut out[o * n + i * w..][..w];
        let c0 = js.start + v - p;
        for (d, &x) in dst[js.clone()].iter_mut().zip(&src[c0..c0 + js.len()]) {
            *d += k * x;
        }
    });
}

fn direct_backward<T: Real>(
    x: &[T],
    wt: &[T],
    og: &[T],
    dims: (usize, usize, usize),
    cout: usize,
    f: usize,
    mut gw: Option<&mut [T]>,
    mut gx: Option<&mut [T]>,
) {
    let (c, h, w) = dims;
    let p = f / 2;
    let n = h * w;
    direct_taps(dims, cout, f, |o, ch, u, v, i, r, js| {
        let wi = ((o * c + ch) * f + u) * f + v;
        let g = &og[o * n + i * w..][..w];
        let c0 = js.start + v - p;
        if let Some(gw) = gw.as_deref_mut() {
            let src = &x[ch * n + r * w..][..w];
            gw[wi] += g[js.clone()]
                .iter()
                .zip(&src[c0..c0 + js.len()])
                .map(|(&a, &b)| a * b)
                .sum::<T>();
        }
        if let Some(gx) = gx.as_deref_mut() {
            let k = wt[wi];
            let dst = &mut gx[ch * n + r * w..][..w];
            for (d, &g) in dst[c0..c0 + js.len()].iter_mut().zip(&g[js.clone()]) {
                *d += k * g;
            }
        }
    });
}

impl<T: Real> Op<T> for Conv2d<T> {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, og: &[T]) {
        let (cout, ho, wo) = self.out_dims;
        let np = ho * wo;
        let k = self.in_dims.0 * self.f * self.f;
        if let Some(gb) = ctx.grad_mut(self.b) {
            for (o, gb) in gb.iter_mut().enumerate() {
                *gb += og[o * np..(o + 1) * np].iter().copied().sum::<T>();
            }
        }
        if self.cols.is_empty() {
            let x = ctx.value(self.x).data();
            let wt = ctx.value(self.w).data();
            let mut gw = ctx.needs(self.w).then(|| vec![T::zero(); wt.len()]);
            let mut gx = ctx.needs(self.x).then(|| vec![T::zero(); x.len()]);
            direct_backward(
                x,
                wt,
                og,
                self.in_dims,
                cout,
                self.f,
                gw.as_deref_mut(),
                gx.as_deref_mut(),
            );
            for (v, g) in [(self.w, gw), (self.x, gx)] {
                if let (Some(g), Some(acc)) = (g, ctx.grad_mut(v)) {
                    acc.iter_mut().zip(g).for_each(|(a, g)| *a += g);
                }
            }
            return;
        }
        if let Some(gw) = ctx.grad_mut(self.w) {
            // dW (Cout x K) += dOut (Cout x P) . cols^T (P x K)
            T::gemm(
                cout,
                np,
                k,
                T::one(),
                og,
                np as isize,
                1,
                &self.cols,
                1,
                np as isize,
                T::one(),
                gw,
                k as isize,
                1,
            );
        }
        if ctx.needs(self.x) {
            let w = ctx.value(self.w).data();
            let mut dcols = vec![T::zero(); k * np];
            // dcols (K x P) = W^T (K x Cout) . dOut (Cout x P)
            T::gemm(
                k,
                cout,
                np,
                T::one(),
                w,
                1,
                k as isize,
                og,
                np as isize,
                1,
                T::zero(),
                &mut dcols,
                np as isize,
                1,
            );
            let gx = ctx.grad_mut(self.x).expect("needs checked");
            col2im(&dcols, gx, self.in_dims, self.f, self.stride);
        }
    }
}

impl<T: Real> Graph<T> {
    /// Zero-padded "same" cross-correlation of a `Cin x H x W` input with
    /// `Cout x Cin x f x f` weights plus a per-channel bias. Output is
    /// `Cout x ceil(H/stride) x ceil(W/stride)`, sampled at rows and columns
    /// `0, stride, 2*stride, ...`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let xs = self.value(x);
        let Some((cin, h, wd)) = xs.chw() else {
            return Err(shape_mismatch("conv2d", &[0, 0, 0], xs.shape()));
        };
        let ws = self.value(w).shape().to_vec();
        let [cout, wcin, f, f2] = ws[..] else {
            return Err(shape_mismatch("conv2d", &[0, cin, 0, 0], &ws));
        };
        if wcin != cin || f != f2 || f % 2 == 0 {
            return Err(shape_mismatch("conv2d", &[cout, cin, f, f], &ws));
        }
        if self.value(b).shape() != [cout] {
            return Err(shape_mismatch("conv2d", &[cout], self.value(b).shape()));
        }
        if stride == 0 {
            return Err(Error::InvalidConfig("conv2d stride must be >= 1".into()));
        }
        let (ho, wo) = (h.div_ceil(stride), wd.div_ceil(stride));
        let np = ho * wo;
        let k = cin * f * f;
        let bias = self.value(b).data();
        let mut out = vec![T::zero(); cout * np];
        for (o, row) in out.chunks_mut(np).enumerate() {
            row.iter_mut().for_each(|v| *v = bias[o]);
        }
        if use_direct(cout, stride) {
            direct_forward(
                xs.data(),
                self.value(w).data(),
                (cin, h, wd),
                cout,
                f,
                &mut out,
            );
            let value = Tensor::new(&[cout, ho, wo], out)?;
            let op = Conv2d {
                x,
                w,
                b,
                cols: Vec::new(),
                in_dims: (cin, h, wd),
                out_dims: (cout, ho, wo),
                f,
                stride,
            };
            return Ok(self.push(value, &[x, w, b], op));
        }
        let cols = im2col(xs.data(), (cin, h, wd), f, stride);
        T::gemm(
            cout,
            k,
            np,
            T::one(),
            self.value(w).data(),
            k as isize,
            1,
            &cols,
            np as isize,
            1,
            T::one(),
            &mut out,
            np as isize,
            1,
        );
        let value = Tensor::new(&[cout, ho, wo], out)?;
        Ok(self.push(
            value,
            &[x, w, b],
            Conv2d {
                x,
                w,
                b,
                cols,
                in_dims: (cin, h, wd),
                out_dims: (cout, ho, wo),
                f,
                stride,
            },
        ))
    }

    /// Convolution described by `spec`, followed by ReLU when requested.
    pub fn conv_layer(&mut self, x: Var, spec: &ConvSpec, w: Var, b: Var) -> Result<Var> {
        spec.validate()?;
        let ws = self.value(w).shape();
        if ws != spec.weight_shape() {
            return Err(shape_mismatch("conv_layer", &spec.weight_shape(), ws));
        }
        let y = self.conv2d(x, w, b, spec.stride)?;
        Ok(if spec.has_relu { self.relu(y) } else { y })
    }
}

// ------------------------------------------------------- bilinear sampling

/// Clamped convex combination; exact at `w == 0` and never leaves
/// `[min(a, b), max(a, b)]` even after rounding.
#[inline]
fn lerp<T: Real>(a: T, b: T, w: T) -> T {
    let v = a + w * (b - a);
    if a <= b {
        v.max(a).min(b)
    } else {
        v.max(b).min(a)
    }
}

/// Bilinear footprint of a (possibly out-of-range) sample position.
#[derive(Clone, Copy)]
struct Tap<T> {
    r0: usize,
    r1: usize,
    c0: usize,
    c1: usize,
    wr: T,
    wc: T,
    /// Whether the position was inside the rectangle along rows / columns;
    /// clamped coordinates carry no derivative.
    live_r: bool,
    live_c: bool,
}

#[inline]
fn tap<T: Real>(h: usize, w: usize, pr: T, pc: T) -> Tap<T> {
    let (maxr, maxc) = (T::of_usize(h - 1), T::of_usize(w - 1));
    let live_r = pr >= T::zero() && pr <= maxr;
    let live_c = pc >= T::zero() && pc <= maxc;
    let pr = pr.max(T::zero()).min(maxr);
    let pc = pc.max(T::zero()).min(maxc);
    let r0 = pr.floor().to_usize().unwrap_or(0).min(h - 1);
    let c0 = pc.floor().to_usize().unwrap_or(0).min(w - 1);
    Tap {
        r0,
        r1: (r0 + 1).min(h - 1),
        c0,
        c1: (c0 + 1).min(w - 1),
        wr: pr - T::of_usize(r0),
        wc: pc - T::of_usize(c0),
        live_r,
        live_c,
    }
}

impl<T: Real> Tap<T> {
    #[inline]
    fn sample(&self, plane: &[T], w: usize) -> T {
        let top = lerp(
            plane[self.r0 * w + self.c0],
            plane[self.r0 * w + self.c1],
            self.wc,
        );
        let bot = lerp(
            plane[self.r1 * w + self.c0],
            plane[self.r1 * w + self.c1],
            self.wc,
        );
        lerp(top, bot, self.wr)
    }

    #[inline]
    fn scatter(&self, plane: &mut [T], w: usize, g: T) {
        let (wr, wc) = (self.wr, self.wc);
        let (ur, uc) = (T::one() - wr, T::one() - wc);
        plane[self.r0 * w + self.c0] += g * ur * uc;
        plane[self.r0 * w + self.c1] += g * ur * wc;
        plane[self.r1 * w + self.c0] += g * wr * uc;
        plane[self.r1 * w + self.c1] += g * wr * wc;
    }

    /// Partial derivatives of the sampled value w.r.t. the sample position.
    #[inline]
    fn position_grad(&self, plane: &[T], w: usize) -> (T, T) {
        let x00 = plane[self.r0 * w + self.c0];
        let x01 = plane[self.r0 * w + self.c1];
        let x10 = plane[self.r1 * w + self.c0];
        let x11 = plane[self.r1 * w + self.c1];
        let (wr, wc) = (self.wr, self.wc);
        let dr = if self.live_r {
            (T::one() - wc) * (x10 - x00) + wc * (x11 - x01)
        } else {
            T::zero()
        };
        let dc = if self.live_c {
            (T::one() - wr) * (x01 - x00) + wr * (x11 - x10)
        } else {
            T::zero()
        };
        (dr, dc)
    }
}

/// `out[ch](x) = src[ch](x + flow(x))` for a `C x H x W` source.
pub(crate) fn sample_forward<T: Real>(
    src: &[T],
    c: usize,
    h: usize,
    w: usize,
    flow: &[T],
) -> Vec<T> {
    let n = h * w;
    let mut out = vec![T::zero(); c * n];
    for r in 0..h {
        for col in 0..w {
            let i = r * w + col;
            let t = tap(
                h,
                w,
                T::of_usize(r) + flow[i],
                T::of_usize(col) + flow[n + i],
            );
            for ch in 0..c {
                out[ch * n + i] = t.sample(&src[ch * n..(ch + 1) * n], w);
            }
        }
    }
    out
}

struct Sample {
    src: Var,
    flow: Var,
}

impl<T: Real> Op<T> for Sample {
    fn name(&self) -> &'static str {
        "bilinear_warp"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, og: &[T]) {
        let (c, h, w) = ctx.value(self.src).chw().expect("rank 3");
        let n = h * w;
        let src = ctx.value(self.src).data();
        let flow = ctx.value(self.flow).data();
        let taps: Vec<Tap<T>> = (0..n)
            .map(|i| {
                let (r, col) = (i / w, i % w);
                tap(
                    h,
                    w,
                    T::of_usize(r) + flow[i],
                    T::of_usize(col) + flow[n + i],
                )
            })
            .collect();
        if let Some(gs) = ctx.grad_mut(self.src) {
            for ch in 0..c {
                let plane = &mut gs[ch * n..(ch + 1) * n];
                for (i, t) in taps.iter().enumerate() {
                    t.scatter(plane, w, og[ch * n + i]);
                }
            }
        }
        if let Some(gf) = ctx.grad_mut(self.flow) {
            for ch in 0..c {
                let plane = &src[ch * n..(ch + 1) * n];
                for (i, t) in taps.iter().enumerate() {
                    let (dr, dc) = t.position_grad(plane, w);
                    let o = og[ch * n + i];
                    gf[i] += o * dr;
                    gf[n + i] += o * dc;
                }
            }
        }
    }
}

// -------------------------------------------------------------- upsample

fn upsample_taps<T: Real>(h: usize, w: usize) -> impl Iterator<Item = Tap<T>> {
    let half = T::lit(0.5);
    (0..2 * h).flat_map(move |r| {
        (0..2 * w).map(move |col| {
            let r0 = r / 2;
            let c0 = col / 2;
            Tap {
                r0,
                r1: (r0 + 1).min(h - 1),
                c0,
                c1: (c0 + 1).min(w - 1),
                wr: if r % 2 == 1 { half } else { T::zero() },
                wc: if col % 2 == 1 { half } else { T::zero() },
                live_r: true,
                live_c: true,
            }
        })
    })
}

struct Upsample {
    x: Var,
}

impl<T: Real> Op<T> for Upsample {
    fn name(&self) -> &'static str {
        "bilinear_upsample"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, og: &[T]) {
        let (c, h, w) = ctx.value(self.x).chw().expect("rank 3");
        let (n, no) = (h * w, 4 * h * w);
        if let Some(g) = ctx.grad_mut(self.x) {
            for ch in 0..c {
                let plane = &mut g[ch * n..(ch + 1) * n];
                for (i, t) in upsample_taps::<T>(h, w).enumerate() {
                    t.scatter(plane, w, og[ch * no + i]);
                }
            }
        }
    }
}

impl<T: Real> Graph<T> {
    /// 2x bilinear upsampling: output pixel `(r, c)` samples the input at
    /// `(r / 2, c / 2)` with edge clamping.
    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let xs = self.value(x);
        let Some((c, h, w)) = xs.chw() else {
            return Err(shape_mismatch("bilinear_upsample", &[0, 0, 0], xs.shape()));
        };
        let (n, no) = (h * w, 4 * h * w);
        let mut out = vec![T::zero(); c * no];
        for ch in 0..c {
            let plane = &xs.data()[ch * n..(ch + 1) * n];
            for (i, t) in upsample_taps::<T>(h, w).enumerate() {
                out[ch * no + i] = t.sample(plane, w);
            }
        }
        let value = Tensor::new(&[c, 2 * h, 2 * w], out)?;
        Ok(self.push(value, &[x], Upsample { x }))
    }

    /// Backward warp of every channel of `src` (`C x H x W`) by `flow`
    /// (`2 x H x W`): `out(x) = src(x + flow(x))`, bilinear, clamped.
    pub fn warp(&mut self, src: Var, flow: Var) -> Result<Var> {
        let ss = self.value(src);
        let Some((c, h, w)) = ss.chw() else {
            return Err(shape_mismatch("bilinear_warp", &[1, 0, 0], ss.shape()));
        };
        let fs = self.value(flow).shape();
        if fs != [2, h, w] {
            return Err(shape_mismatch("bilinear_warp", &[2, h, w], fs));
        }
        let out = sample_forward(ss.data(), c, h, w, self.value(flow).data());
        let value = Tensor::new(&[c, h, w], out)?;
        Ok(self.push(value, &[src, flow], Sample { src, flow }))
    }

    /// Flow composition `out(x) = ab(x) + bc(x + ab(x))`.
    pub fn compose(&mut self, ab: Var, bc: Var) -> Result<Var> {
        let sampled = self.warp(bc, ab)?;
        self.add(ab, sampled)
    }
}

/// A flow node together with the frames it maps between.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaggedFlow {
    pub var: Var,
    pub from: i64,
    pub to: i64,
}

impl TaggedFlow {
    pub fn new(var: Var, from: i64, to: i64) -> Self {
        Self { var, from, to }
    }
}

/// Compose `ab: a -> b` with `bc: b -> c` into `a -> c`.
pub fn compose_tagged<T: Real>(
    g: &mut Graph<T>,
    ab: TaggedFlow,
    bc: TaggedFlow,
) -> Result<TaggedFlow> {
    if ab.to != bc.from {
        return Err(Error::FrameTagMismatch {
            op: "flow_compose",
            detail: format!("{}->{} then {}->{}", ab.from, ab.to, bc.from, bc.to),
        });
    }
    let var = g.compose(ab.var, bc.var)?;
    Ok(TaggedFlow::new(var, ab.from, bc.to))
}

// ----------------------------------------------------- plain-data helpers

/// Backward-warp an image by a flow.
pub fn warp_image(image: &Image, flow: &Flow) -> Result<Image> {
    if image.dims() != flow.dims() {
        return Err(shape_mismatch(
            "bilinear_warp",
            &[image.rows(), image.cols()],
            &[flow.rows(), flow.cols()],
        ));
    }
    let (h, w) = image.dims();
    let out = sample_forward(image.data(), 1, h, w, flow.planes());
    Image::new(h, w, out)
}

/// `ab: a -> b` composed with `bc: b -> c`, giving `a -> c`.
pub fn compose_flows(ab: &Flow, bc: &Flow) -> Result<Flow> {
    if ab.to != bc.from {
        return Err(Error::FrameTagMismatch {
            op: "flow_compose",
            detail: format!("{}->{} then {}->{}", ab.from, ab.to, bc.from, bc.to),
        });
    }
    if ab.dims() != bc.dims() {
        return Err(shape_mismatch(
            "flow_compose",
            &[2, ab.rows(), ab.cols()],
            &[2, bc.rows(), bc.cols()],
        ));
    }
    let (h, w) = ab.dims();
    let mut out = sample_forward(bc.planes(), 2, h, w, ab.planes());
    out.iter_mut().zip(ab.planes()).for_each(|(o, a)| *o += a);
    Flow::from_planes(h, w, out, ab.from, bc.to)
}

/// Bilinear sample of every channel of `src` at fractional `(row, col)`,
/// clamped to the rectangle.
pub(crate) fn sample_point<T: Real>(
    src: &[T],
    c: usize,
    h: usize,
    w: usize,
    row: T,
    col: T,
) -> Vec<T> {
    let t = tap(h, w, row, col);
    let n = h * w;
    (0..c)
        .map(|ch| t.sample(&src[ch * n..(ch + 1) * n], w))
        .collect()
}
