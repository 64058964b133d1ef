//! Training objectives.
//!
//! Every reduction is a mean, so the regularizer weights do not depend on the
//! image resolution. SSIM reconstruction enters the totals as `1 - SSIM` per
//! branch so that both reconstruction kinds are minimized.

use crate::autodiff::{Graph, Real, Var};
use crate::error::{shape_mismatch, Error, Result};
use crate::image::Image;
use crate::layers::{compose_tagged, TaggedFlow};
use crate::models::ModelOutputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconKind {
    L2,
    Ssim,
}

impl std::str::FromStr for ReconKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(ReconKind::L2),
            "ssim" => Ok(ReconKind::Ssim),
            other => Err(Error::InvalidConfig(format!(
                "unknown loss `{other}` (l2|ssim)"
            ))),
        }
    }
}

impl std::fmt::Display for ReconKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReconKind::L2 => "l2",
            ReconKind::Ssim => "ssim",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Total-variation weight.
    pub lambda1: f64,
    /// Cycle-consistency weight.
    pub lambda2: f64,
    pub c1: f64,
    pub c2: f64,
    pub ssim_patch: usize,
    pub recon: ReconKind,
}

impl LossWeights {
    /// Defaults tuned for each reconstruction kind: (0.001, 0.0005) with L2,
    /// (0.1, 0.05) with SSIM; SSIM constants c1 = 1e-4, c2 = 9e-4 on 11x11
    /// patches.
    pub fn for_recon(recon: ReconKind) -> Self {
        let (lambda1, lambda2) = match recon {
            ReconKind::L2 => (0.001, 0.0005),
            ReconKind::Ssim => (0.1, 0.05),
        };
        Self {
            lambda1,
            lambda2,
            c1: 1e-4,
            c2: 9e-4,
            ssim_patch: 11,
            recon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::InvalidConfig("lambda weights must be >= 0".into()));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::InvalidConfig("SSIM constants must be > 0".into()));
        }
        if self.ssim_patch < 3 || self.ssim_patch % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "SSIM patch {} must be odd and >= 3",
                self.ssim_patch
            )));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::for_recon(ReconKind::Ssim)
    }
}

fn check_same<T: Real>(g: &Graph<T>, op: &'static str, a: Var, b: Var) -> Result<()> {
    if g.value(a).shape() != g.value(b).shape() {
        return Err(shape_mismatch(op, g.value(a).shape(), g.value(b).shape()));
    }
    Ok(())
}

/// Mean squared intensity difference.
pub fn l2_loss<T: Real>(g: &mut Graph<T>, pred: Var, target: Var) -> Result<Var> {
    check_same(g, "l2_loss", pred, target)?;
    let d = g.sub(pred, target)?;
    let sq = g.square(d);
    Ok(g.mean(sq))
}

/// Mean structural similarity over every interior `ssim_patch` window
/// (uniform weights, stride 1, population statistics).
pub fn ssim<T: Real>(g: &mut Graph<T>, x: Var, y: Var, w: &LossWeights) -> Result<Var> {
    check_same(g, "ssim", x, y)?;
    let k = w.ssim_patch;
    let shape = g.value(x).shape().to_vec();
    if shape.len() != 3 || shape[1] < k || shape[2] < k {
        return Err(shape_mismatch("ssim", &[1, k, k], &shape));
    }
    let (c1, c2) = (T::lit(w.c1), T::lit(w.c2));

    let mx = g.box_mean(x, k)?;
    let my = g.box_mean(y, k)?;
    let xx = g.mul(x, x)?;
    let yy = g.mul(y, y)?;
    let xy = g.mul(x, y)?;
    let exx = g.box_mean(xx, k)?;
    let eyy = g.box_mean(yy, k)?;
    let exy = g.box_mean(xy, k)?;

    let mxmy = g.mul(mx, my)?;
    let mx2 = g.mul(mx, mx)?;
    let my2 = g.mul(my, my)?;
    let vx = g.sub(exx, mx2)?;
    let vy = g.sub(eyy, my2)?;
    let cov = g.sub(exy, mxmy)?;

    // (2 mx my + c1)(2 cov + c2) / ((mx^2 + my^2 + c1)(vx + vy + c2))
    let two = T::lit(2.0);
    let lum_num = g.scale(mxmy, two);
    let lum_num = g.add_scalar(lum_num, c1);
    let cs_num = g.scale(cov, two);
    let cs_num = g.add_scalar(cs_num, c2);
    let lum_den = g.add(mx2, my2)?;
    let lum_den = g.add_scalar(lum_den, c1);
    let cs_den = g.add(vx, vy)?;
    let cs_den = g.add_scalar(cs_den, c2);
    let num = g.mul(lum_num, cs_num)?;
    let den = g.mul(lum_den, cs_den)?;
    let map = g.div(num, den)?;
    Ok(g.mean(map))
}

/// Anisotropic total variation: sum of absolute forward differences along
/// rows and columns, divided by the number of elements (pixels times
/// components).
pub fn tv_loss<T: Real>(g: &mut Graph<T>, flow: Var) -> Result<Var> {
    let n = g.value(flow).len();
    let dr = g.forward_diff(flow, 1)?;
    let dc = g.forward_diff(flow, 2)?;
    let ar = g.abs(dr);
    let ac = g.abs(dc);
    let sr = g.sum(ar);
    let sc = g.sum(ac);
    let s = g.add(sr, sc)?;
    Ok(g.scale(s, T::one() / T::of_usize(n)))
}

/// Mean squared magnitude of `compose(fw, skip) - bw`, where
/// `fw: t -> t+1`, `skip: t+1 -> t-1`, `bw: t -> t-1`.
pub fn cycle_loss<T: Real>(
    g: &mut Graph<T>,
    fw: TaggedFlow,
    skip: TaggedFlow,
    bw: TaggedFlow,
) -> Result<Var> {
    let composed = compose_tagged(g, fw, skip)?;
    if composed.from != bw.from || composed.to != bw.to {
        return Err(Error::FrameTagMismatch {
            op: "cycle_loss",
            detail: format!(
                "composed {}->{} vs direct {}->{}",
                composed.from, composed.to, bw.from, bw.to
            ),
        });
    }
    check_same(g, "cycle_loss", composed.var, bw.var)?;
    let d = g.sub(composed.var, bw.var)?;
    let sq = g.square(d);
    let s = g.sum(sq);
    let pixels = g.value(bw.var).len() / 2;
    Ok(g.scale(s, T::one() / T::of_usize(pixels)))
}

/// One reconstruction term: L2, or `1 - SSIM`.
pub fn recon_loss<T: Real>(
    g: &mut Graph<T>,
    pred: Var,
    target: Var,
    w: &LossWeights,
) -> Result<Var> {
    match w.recon {
        ReconKind::L2 => l2_loss(g, pred, target),
        ReconKind::Ssim => {
            let s = ssim(g, pred, target, w)?;
            let neg = g.scale(s, -T::one());
            Ok(g.add_scalar(neg, T::one()))
        }
    }
}

/// Ground-truth frames a model's outputs are scored against.
#[derive(Debug, Clone, Copy)]
pub struct LossTargets {
    /// The frame being interpolated, N_t.
    pub current: Var,
    /// Its later neighbour N_{t+1}; target of the skip branch.
    pub next: Var,
}

fn need<V: Copy>(v: Option<V>, name: &'static str) -> Result<V> {
    v.ok_or(Error::MissingOutput(name))
}

/// Two-branch objective: both reconstructions plus `lambda1` times the TV of
/// both flows.
pub fn total_loss_mfin<T: Real>(
    g: &mut Graph<T>,
    out: &ModelOutputs,
    targets: &LossTargets,
    w: &LossWeights,
) -> Result<Var> {
    let pred_prev = need(out.pred_prev, "pred_prev")?;
    let pred_next = need(out.pred_next, "pred_next")?;
    let flow_prev = need(out.flow_prev, "flow_prev")?;
    let flow_next = need(out.flow_next, "flow_next")?;

    let r1 = recon_loss(g, pred_prev, targets.current, w)?;
    let r2 = recon_loss(g, pred_next, targets.current, w)?;
    let recon = g.add(r1, r2)?;
    let t1 = tv_loss(g, flow_prev.var)?;
    let t2 = tv_loss(g, flow_next.var)?;
    let tv = g.add(t1, t2)?;
    let reg = g.scale(tv, T::lit(w.lambda1));
    g.add(recon, reg)
}

/// Three-branch objective: adds the skip-branch reconstruction and TV, and
/// `lambda2` times the cycle-consistency term.
pub fn total_loss_mfinc<T: Real>(
    g: &mut Graph<T>,
    out: &ModelOutputs,
    targets: &LossTargets,
    w: &LossWeights,
) -> Result<Var> {
    let pred_prev = need(out.pred_prev, "pred_prev")?;
    let pred_next = need(out.pred_next, "pred_next")?;
    let pred_skip = need(out.pred_skip, "pred_skip")?;
    let flow_prev = need(out.flow_prev, "flow_prev")?;
    let flow_next = need(out.flow_next, "flow_next")?;
    let flow_skip = need(out.flow_skip, "flow_skip")?;

    let r1 = recon_loss(g, pred_prev, targets.current, w)?;
    let r2 = recon_loss(g, pred_next, targets.current, w)?;
    let r3 = recon_loss(g, pred_skip, targets.next, w)?;
    let recon = g.add(r1, r2)?;
    let recon = g.add(recon, r3)?;

    let t1 = tv_loss(g, flow_prev.var)?;
    let t2 = tv_loss(g, flow_next.var)?;
    let t3 = tv_loss(g, flow_skip.var)?;
    let tv = g.add(t1, t2)?;
    let tv = g.add(tv, t3)?;
    let reg = g.scale(tv, T::lit(w.lambda1));

    let cyc = cycle_loss(g, flow_next, flow_skip, flow_prev)?;
    let cyc = g.scale(cyc, T::lit(w.lambda2));

    let total = g.add(recon, reg)?;
    g.add(total, cyc)
}

/// Direct intensity objective for the single-head baseline.
pub fn total_loss_scin<T: Real>(
    g: &mut Graph<T>,
    out: &ModelOutputs,
    targets: &LossTargets,
    w: &LossWeights,
) -> Result<Var> {
    let image = need(out.intensity, "intensity")?;
    recon_loss(g, image, targets.current, w)
}

/// SSIM of two plain images, evaluated in double precision through the same
/// graph operations the training loss uses.
pub fn ssim_images(x: &Image, y: &Image, w: &LossWeights) -> Result<f64> {
    let mut g = Graph::<f64>::new();
    let a = g.constant(x.to_tensor());
    let b = g.constant(y.to_tensor());
    let s = ssim(&mut g, a, b, w)?;
    Ok(g.value(s).item())
}
