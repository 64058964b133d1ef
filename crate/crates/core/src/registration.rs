//! Reference deformable registration: bilinear control-point grid, local
//! correlation coefficient similarity and TV regularization, optimized with
//! Adam through the differentiable warp, coarse to fine.

use crate::autodiff::{AdamState, BackwardCtx, Graph, Op, Real, Tensor, Var};
use crate::error::{shape_mismatch, Error, Result};
use crate::image::{Flow, Image};
use crate::losses::tv_loss;

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationConfig {
    pub grid_spacing_px: usize,
    pub lcc_window: usize,
    pub tv_weight: f64,
    /// Adam iterations per pyramid level.
    pub iterations: usize,
    /// Peak Adam step size, cosine-annealed to zero over each level. A
    /// constant rate leaves Adam jittering by about its step size around the
    /// optimum.
    pub learning_rate: f64,
    pub pyramid_levels: usize,
    /// Gaussian pre-smoothing of both images before matching, px; 0 disables.
    /// Without it the interpolation in the warp low-passes the noise of the
    /// moving image, which LCC rewards with a spurious half-pixel shift.
    pub smoothing_sigma_px: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            grid_spacing_px: 4,
            lcc_window: 9,
            tv_weight: 0.1,
            iterations: 300,
            learning_rate: 0.1,
            pyramid_levels: 2,
            smoothing_sigma_px: 1.0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.grid_spacing_px == 0 {
            return bad("grid spacing must be >= 1");
        }
        if self.lcc_window % 2 == 0 || self.lcc_window == 0 {
            return bad("LCC window must be odd");
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1");
        }
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be >= 1");
        }
        if !(self.tv_weight >= 0.0 && self.learning_rate > 0.0) {
            return bad("tv_weight must be >= 0 and learning_rate > 0");
        }
        if !(self.smoothing_sigma_px >= 0.0 && self.smoothing_sigma_px.is_finite()) {
            return bad("smoothing_sigma_px must be finite and >= 0");
        }
        Ok(())
    }
}

/// Control grid extents for an `h x w` image.
pub fn grid_dims(h: usize, w: usize, spacing: usize) -> (usize, usize) {
    (h.div_ceil(spacing) + 1, w.div_ceil(spacing) + 1)
}

/// Linear interpolation weights: dense coordinate `x` lies between control
/// points `i0` and `i0 + 1` with fraction `t`.
fn axis_weights(n: usize, spacing: usize, grid: usize) -> Vec<(usize, usize, f64)> {
    (0..n)
        .map(|x| {
            let i0 = (x / spacing).min(grid - 1);
            let i1 = (i0 + 1).min(grid - 1);
            (i0, i1, (x - i0 * spacing) as f64 / spacing as f64)
        })
        .collect()
}

struct GridToDense {
    ctrl: Var,
    spacing: usize,
    h: usize,
    w: usize,
}

fn grid_to_dense_raw<T: Real>(
    ctrl: &[T],
    gh: usize,
    gw: usize,
    h: usize,
    w: usize,
    s: usize,
) -> Vec<T> {
    let rows = axis_weights(h, s, gh);
    let cols = axis_weights(w, s, gw);
    let mut out = vec![T::zero(); 2 * h * w];
    for ch in 0..2 {
        let g = &ctrl[ch * gh * gw..(ch + 1) * gh * gw];
        for (r, &(r0, r1, tr)) in rows.iter().enumerate() {
            let tr = T::lit(tr);
            for (c, &(c0, c1, tc)) in cols.iter().enumerate() {
                let tc = T::lit(tc);
                let top = g[r0 * gw + c0] * (T::one() - tc) + g[r0 * gw + c1] * tc;
                let bot = g[r1 * gw + c0] * (T::one() - tc) + g[r1 * gw + c1] * tc;
                out[ch * h * w + r * w + c] = top * (T::one() - tr) + bot * tr;
            }
        }
    }
    out
}

impl<T: Real> Op<T> for GridToDense {
    fn name(&self) -> &'static str {
        "grid_to_dense"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, out_grad: &[T]) {
        let [_, gh, gw] = ctx.value(self.ctrl).shape()[..] else {
            unreachable!()
        };
        let (s, h, w) = (self.spacing, self.h, self.w);
        let n = h * w;
        let rows = axis_weights(h, s, gh);
        let cols = axis_weights(w, s, gw);
        let Some(gc) = ctx.grad_mut(self.ctrl) else {
            return;
        };
        for ch in 0..2 {
            let g = &mut gc[ch * gh * gw..(ch + 1) * gh * gw];
            for (r, &(r0, r1, tr)) in rows.iter().enumerate() {
                let tr = T::lit(tr);
                for (c, &(c0, c1, tc)) in cols.iter().enumerate() {
                    let tc = T::lit(tc);
                    let d = out_grad[ch * n + r * w + c];
                    let top = d * (T::one() - tr);
                    let bot = d * tr;
                    g[r0 * gw + c0] += top * (T::one() - tc);
                    g[r0 * gw + c1] += top * tc;
                    g[r1 * gw + c0] += bot * (T::one() - tc);
                    g[r1 * gw + c1] += bot * tc;
                }
            }
        }
    }
}

impl<T: Real> Graph<T> {
    /// Bilinear interpolation of a `2 x gh x gw` control grid with spacing
    /// `s` to a dense `2 x h x w` flow. Control point `(i, j)` sits at pixel
    /// `(i s, j s)`.
    pub fn grid_to_dense(&mut self, ctrl: Var, h: usize, w: usize, spacing: usize) -> Result<Var> {
        let (gh, gw) = grid_dims(h, w, spacing);
        let cs = self.value(ctrl).shape();
        if cs != [2, gh, gw] {
            return Err(shape_mismatch("grid_to_dense", &[2, gh, gw], cs));
        }
        let out = grid_to_dense_raw(self.value(ctrl).data(), gh, gw, h, w, spacing);
        let value = Tensor::new(&[2, h, w], out)?;
        Ok(self.push(
            value,
            &[ctrl],
            GridToDense {
                ctrl,
                spacing,
                h,
                w,
            },
        ))
    }
}

/// Mean over interior `window x window` patches of the stabilized Pearson
/// correlation `(cov + 1e-6) / sqrt((var_x + 1e-6)(var_y + 1e-6))`.
pub fn lcc_graph<T: Real>(g: &mut Graph<T>, x: Var, y: Var, window: usize) -> Result<Var> {
    let shape = g.value(x).shape().to_vec();
    if g.value(y).shape() != shape.as_slice() {
        return Err(shape_mismatch("lcc", &shape, g.value(y).shape()));
    }
    if shape.len() != 3 || shape[1] < window || shape[2] < window {
        return Err(shape_mismatch("lcc", &[1, window, window], &shape));
    }
    let eps = T::lit(LCC_EPS);
    let mx = g.box_mean(x, window)?;
    let my = g.box_mean(y, window)?;
    let xx = g.mul(x, x)?;
    let yy = g.mul(y, y)?;
    let xy = g.mul(x, y)?;
    let exx = g.box_mean(xx, window)?;
    let eyy = g.box_mean(yy, window)?;
    let exy = g.box_mean(xy, window)?;
    let mx2 = g.mul(mx, mx)?;
    let my2 = g.mul(my, my)?;
    let mxy = g.mul(mx, my)?;
    let vx = g.sub(exx, mx2)?;
    let vy = g.sub(eyy, my2)?;
    let cov = g.sub(exy, mxy)?;
    // Stabilizing the covariance too makes y == x exactly 1 and stationary.
    let cov = g.add_scalar(cov, eps);
    let vx = g.add_scalar(vx, eps);
    let vy = g.add_scalar(vy, eps);
    let den = g.mul(vx, vy)?;
    let den = g.sqrt(den);
    let r = g.div(cov, den)?;
    Ok(g.mean(r))
}

pub const LCC_EPS: f64 = 1e-6;

pub fn lcc(x: &Image, y: &Image, window: usize) -> Result<f64> {
    x.check_same_dims(y, "lcc")?;
    let mut g = Graph::<f64>::new();
    let a = g.constant(x.to_tensor());
    let b = g.constant(y.to_tensor());
    let r = lcc_graph(&mut g, a, b, window)?;
    Ok(g.value(r).item())
}

#[derive(Debug, Clone)]
pub struct Registration {
    /// Backward flow on the fixed grid: `warp(moving, flow) ~ fixed`.
    pub flow: Flow,
    /// Control-point displacements, `2 x gh x gw`, at full resolution.
    pub control: Tensor<f64>,
    /// LCC of the warped moving image against the fixed image.
    pub similarity: f64,
    /// Objective per iteration, coarsest level first.
    pub objective: Vec<f64>,
}

/// Separable Gaussian blur with clamped edges.
fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if sigma == 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let (h, w) = img.dims();
    let pass = |src: &Image, along_rows: bool| {
        Image::from_fn(h, w, |r, c| {
            let mut acc = 0.0;
            for (k, d) in (-radius..=radius).enumerate() {
                let v = if along_rows {
                    src.get((r as isize + d).clamp(0, h as isize - 1) as usize, c)
                } else {
                    src.get(r, (c as isize + d).clamp(0, w as isize - 1) as usize)
                };
                acc += kernel[k] * v as f64;
            }
            (acc / norm) as f32
        })
    };
    pass(&pass(img, true), false)
}

/// Cosine step-size multiplier, 1 at the start of a level and 0 at its end.
fn anneal(k: usize, iterations: usize) -> f64 {
    0.5 * (1.0 + (std::f64::consts::PI * k as f64 / iterations as f64).cos())
}

fn downsample(img: &Image) -> Image {
    let (h, w) = (img.rows() / 2, img.cols() / 2);
    Image::from_fn(h, w, |r, c| {
        0.25 * (img.get(2 * r, 2 * c)
            + img.get(2 * r + 1, 2 * c)
            + img.get(2 * r, 2 * c + 1)
            + img.get(2 * r + 1, 2 * c + 1))
    })
}

/// Resample a coarse control grid onto the next finer level's grid and
/// double the displacements.
fn refine_grid(coarse: &Tensor<f64>, fine_dims: (usize, usize)) -> Tensor<f64> {
    let [_, gh, gw] = coarse.shape()[..] else {
        unreachable!()
    };
    let (fh, fw) = fine_dims;
    let d = coarse.data();
    Tensor::from_fn(&[2, fh, fw], |i| {
        let ch = i / (fh * fw);
        let (r, c) = ((i % (fh * fw)) / fw, i % fw);
        let (pr, pc) = (
            (r as f64 / 2.0).min((gh - 1) as f64),
            (c as f64 / 2.0).min((gw - 1) as f64),
        );
        let (r0, c0) = (pr.floor() as usize, pc.floor() as usize);
        let (r1, c1) = ((r0 + 1).min(gh - 1), (c0 + 1).min(gw - 1));
        let (tr, tc) = (pr - r0 as f64, pc - c0 as f64);
        let at = |rr: usize, cc: usize| d[ch * gh * gw + rr * gw + cc];
        let top = at(r0, c0) * (1.0 - tc) + at(r0, c1) * tc;
        let bot = at(r1, c0) * (1.0 - tc) + at(r1, c1) * tc;
        2.0 * (top * (1.0 - tr) + bot * tr)
    })
}

fn objective(
    g: &mut Graph<f64>,
    ctrl: Var,
    moving: Var,
    fixed: Var,
    dims: (usize, usize),
    cfg: &RegistrationConfig,
) -> Result<(Var, Var)> {
    let flow = g.grid_to_dense(ctrl, dims.0, dims.1, cfg.grid_spacing_px)?;
    let warped = g.warp(moving, flow)?;
    let sim = lcc_graph(g, warped, fixed, cfg.lcc_window)?;
    let tv = tv_loss(g, ctrl)?;
    let neg = g.scale(sim, -1.0);
    let reg = g.scale(tv, cfg.tv_weight);
    Ok((g.add(neg, reg)?, sim))
}

/// Register `moving` onto `fixed`.
pub fn register(moving: &Image, fixed: &Image, cfg: &RegistrationConfig) -> Result<Registration> {
    cfg.validate()?;
    moving.check_same_dims(fixed, "register")?;
    let (h, w) = fixed.dims();
    if h < cfg.grid_spacing_px
        || w < cfg.grid_spacing_px
        || h < cfg.lcc_window
        || w < cfg.lcc_window
    {
        return Err(Error::InvalidConfig(format!(
            "{h}x{w} images are smaller than the grid spacing or LCC window"
        )));
    }

    // coarsest level first; stop halving once the window would not fit
    let sigma = cfg.smoothing_sigma_px;
    let mut pyramid = vec![(gaussian_blur(moving, sigma), gaussian_blur(fixed, sigma))];
    while pyramid.len() < cfg.pyramid_levels {
        let (m, f) = pyramid.last().expect("non-empty");
        if m.rows() % 2 != 0
            || m.cols() % 2 != 0
            || m.rows() / 2 < cfg.lcc_window
            || m.cols() / 2 < cfg.lcc_window
        {
            break;
        }
        let next = (downsample(m), downsample(f));
        pyramid.push(next);
    }
    pyramid.reverse();

    let mut ctrl: Option<Tensor<f64>> = None;
    let mut trace = Vec::new();
    let mut iteration = 0;
    for (m, f) in &pyramid {
        let dims = f.dims();
        let gdims = grid_dims(dims.0, dims.1, cfg.grid_spacing_px);
        let mut c = match ctrl.take() {
            None => Tensor::zeros(&[2, gdims.0, gdims.1]),
            Some(coarse) => refine_grid(&coarse, gdims),
        };
        let mt: Tensor<f64> = m.to_tensor();
        let ft: Tensor<f64> = f.to_tensor();
        let mut adam = AdamState::new(std::slice::from_ref(&c), cfg.learning_rate);
        for k in 0..cfg.iterations {
            adam.learning_rate = cfg.learning_rate * anneal(k, cfg.iterations);
            let mut g = Graph::<f64>::new();
            let cv = g.param(c.clone());
            let mv = g.constant(mt.clone());
            let fv = g.constant(ft.clone());
            let (obj, _) = objective(&mut g, cv, mv, fv, dims, cfg)?;
            let value = g.value(obj).item();
            if !value.is_finite() {
                return Err(Error::NonFiniteObjective { iteration });
            }
            trace.push(value);
            g.backward(obj)?;
            let grad = g.grad(cv);
            adam.update(std::slice::from_mut(&mut c), std::slice::from_ref(&grad))?;
            iteration += 1;
        }
        ctrl = Some(c);
    }

    let c = ctrl.expect("at least one level");
    let mut g = Graph::<f64>::new();
    let cv = g.constant(c.clone());
    let mv = g.constant(moving.to_tensor());
    let fv = g.constant(fixed.to_tensor());
    let (obj, sim) = objective(&mut g, cv, mv, fv, (h, w), cfg)?;
    if !g.value(obj).item().is_finite() {
        return Err(Error::NonFiniteObjective { iteration });
    }
    let dense = g.grid_to_dense(cv, h, w, cfg.grid_spacing_px)?;
    Ok(Registration {
        flow: Flow::from_tensor(g.value(dense), 0, 1)?,
        control: c,
        similarity: g.value(sim).item(),
        objective: trace,
    })
}
