//! Image-, registration- and landmark-based scores of interpolated frames.
//!
//! Registration-based scores use the reference registration as the gold
//! standard. `F_gs(ref -> s)` is the flow on the reference grid pointing into
//! frame `s`, i.e. the registration with `fixed = reference, moving = s`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{shape_mismatch, Error, Result};
use crate::flow::{
    endpoint_error, flow_magnitude_stats, invert_flow, sample_flow_at, Landmark, MagnitudeStats,
    DEFAULT_INVERSION_ITERS, DEFAULT_INVERSION_TOL, DEFAULT_PIXEL_SPACING_MM,
};
use crate::image::{Flow, Image, Mask};
use crate::layers::compose_flows;
use crate::losses::{ssim_images, LossWeights};
use crate::models::nearest_rank;
use crate::registration::{register, RegistrationConfig};

pub fn rmse(pred: &Image, truth: &Image) -> Result<f64> {
    pred.check_same_dims(truth, "rmse")?;
    let n = pred.data().len().max(1);
    let sq: f64 = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    Ok((sq / n as f64).sqrt())
}

/// SSIM with the training loss defaults (11x11 windows, c1 = 1e-4,
/// c2 = 9e-4).
pub fn ssim_metric(pred: &Image, truth: &Image) -> Result<f64> {
    ssim_images(pred, truth, &LossWeights::default())
}

/// Residual motion: magnitude of the registration of `pred` onto `truth`.
pub fn res_mot(
    pred: &Image,
    truth: &Image,
    reg: &RegistrationConfig,
    pixel_spacing_mm: f64,
) -> Result<MagnitudeStats> {
    let r = register(pred, truth, reg)?;
    flow_magnitude_stats(&r.flow, None, pixel_spacing_mm)
}

/// How two reference-motion fields are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MotionDiff {
    /// Mean `|F1 - F2|`.
    #[default]
    Vector,
    /// Mean `| |F1| - |F2| |`.
    Magnitude,
}

impl std::str::FromStr for MotionDiff {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vector" => Ok(MotionDiff::Vector),
            "magnitude" => Ok(MotionDiff::Magnitude),
            other => Err(Error::InvalidConfig(format!(
                "unknown motion difference `{other}` (vector|magnitude)"
            ))),
        }
    }
}

/// Mean difference of two flows over an optional mask.
pub fn motion_difference(
    f1: &Flow,
    f2: &Flow,
    mask: Option<&Mask>,
    mode: MotionDiff,
) -> Result<f64> {
    match mode {
        MotionDiff::Vector => endpoint_error(f1, f2, mask),
        MotionDiff::Magnitude => {
            if f1.dims() != f2.dims() {
                let (a, b) = (f1.dims(), f2.dims());
                return Err(shape_mismatch(
                    "motion_difference",
                    &[a.0, a.1],
                    &[b.0, b.1],
                ));
            }
            let (h, w) = f1.dims();
            let mut sum = 0.0;
            let mut n = 0usize;
            for r in 0..h {
                for c in 0..w {
                    if mask.is_none_or(|m| m.get(r, c)) {
                        sum += (f1.magnitude_at(r, c) - f2.magnitude_at(r, c)).abs();
                        n += 1;
                    }
                }
            }
            if n == 0 {
                return Err(Error::EmptyMask);
            }
            Ok(sum / n as f64)
        }
    }
}

/// Reference-motion error of an image: compare `F_gs(ref -> pred)` with
/// `F_gs(ref -> truth)`.
pub fn ref_mot_err_im(
    pred: &Image,
    truth: &Image,
    reference: &Image,
    mask: Option<&Mask>,
    reg: &RegistrationConfig,
    mode: MotionDiff,
) -> Result<f64> {
    let f1 = register(pred, reference, reg)?.flow;
    let f2 = register(truth, reference, reg)?.flow;
    motion_difference(&f1, &f2, mask, mode)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowBasedError {
    pub px: f64,
    /// Residual of the inversion of the predicted flow.
    pub inversion_residual: f64,
    pub inversion_converged: bool,
}

/// Reference-motion error of a predicted flow, given the gold-standard flows
/// into the acquired frame `t+1` and the target frame `t`: the estimate
/// `F_gs(ref -> t+1) o F(t -> t+1)^-1` is compared with `F_gs(ref -> t)`.
pub fn ref_mot_err_fl_from(
    flow_pred: &Flow,
    gs_ref_next: &Flow,
    gs_ref_t: &Flow,
    mask: Option<&Mask>,
) -> Result<FlowBasedError> {
    let inv = invert_flow(flow_pred, DEFAULT_INVERSION_ITERS, DEFAULT_INVERSION_TOL)?;
    let mut to_next = gs_ref_next.clone();
    to_next.to = inv.flow.from;
    let estimate = compose_flows(&to_next, &inv.flow)?;
    Ok(FlowBasedError {
        px: endpoint_error(&estimate, gs_ref_t, mask)?,
        inversion_residual: inv.residual,
        inversion_converged: inv.converged,
    })
}

/// As [`ref_mot_err_fl_from`], registering the reference onto the truth
/// frames first.
pub fn ref_mot_err_fl(
    flow_pred: &Flow,
    truth_t: &Image,
    truth_next: &Image,
    reference: &Image,
    mask: Option<&Mask>,
    reg: &RegistrationConfig,
) -> Result<FlowBasedError> {
    let gs_next = register(truth_next, reference, reg)?.flow;
    let gs_t = register(truth_t, reference, reg)?.flow;
    ref_mot_err_fl_from(flow_pred, &gs_next, &gs_t, mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkErrors {
    /// `(id, error px)` in id order.
    pub per_landmark: Vec<(u32, f64)>,
    pub mean_px: f64,
}

/// Transport the landmarks of frame `t` with `F(t -> t+1)` and measure the
/// distance to their annotated positions in frame `t+1`.
pub fn landmark_err(
    flow_pred: &Flow,
    at_t: &[Landmark],
    at_next: &[Landmark],
) -> Result<LandmarkErrors> {
    if at_t.is_empty() {
        return Err(Error::InvalidConfig("no landmarks to evaluate".into()));
    }
    let next: BTreeMap<u32, &Landmark> = at_next.iter().map(|l| (l.id, l)).collect();
    let mut per_landmark = Vec::with_capacity(at_t.len());
    for l in at_t {
        let target = next.get(&l.id).ok_or_else(|| {
            Error::InvalidConfig(format!("landmark {} missing in the next frame", l.id))
        })?;
        let [dr, dc] = sample_flow_at(flow_pred, l.row, l.col)?;
        let err = (l.row + dr - target.row).hypot(l.col + dc - target.col);
        per_landmark.push((l.id, err));
    }
    per_landmark.sort_by_key(|&(id, _)| id);
    let mean_px = per_landmark.iter().map(|p| p.1).sum::<f64>() / per_landmark.len() as f64;
    Ok(LandmarkErrors {
        per_landmark,
        mean_px,
    })
}

/// Physical unit of a metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Intensity,
    Unitless,
    Pixels,
}

pub const METRICS: [(&str, Unit); 8] = [
    ("rmse", Unit::Intensity),
    ("ssim", Unit::Unitless),
    ("res_mot", Unit::Pixels),
    ("ref_mot_err_im", Unit::Pixels),
    ("ref_mot_err_im_roi", Unit::Pixels),
    ("ref_mot_err_fl", Unit::Pixels),
    ("ref_mot_err_fl_roi", Unit::Pixels),
    ("landmark_err", Unit::Pixels),
];

fn unit_of(metric: &str) -> Unit {
    METRICS
        .iter()
        .find(|m| m.0 == metric)
        .map_or(Unit::Unitless, |m| m.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub frame: usize,
    pub metric: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    /// 5th percentile for SSIM, 95th otherwise.
    pub percentile: f64,
    pub percentile_rank: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub pixel_spacing_mm: f64,
    pub rows: Vec<MetricRow>,
    /// Frames whose predicted-flow inversion did not converge.
    pub inversion_flags: Vec<usize>,
    pub notices: Vec<String>,
}

impl MetricsReport {
    pub fn new(pixel_spacing_mm: f64) -> Self {
        Self {
            pixel_spacing_mm,
            rows: Vec::new(),
            inversion_flags: Vec::new(),
            notices: Vec::new(),
        }
    }

    pub fn push(&mut self, frame: usize, metric: &'static str, value: f64) {
        self.rows.push(MetricRow {
            frame,
            metric,
            value,
        });
    }

    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn has(&self, metric: &str) -> bool {
        self.rows.iter().any(|r| r.metric == metric)
    }

    pub fn aggregate(&self, metric: &str) -> Option<Aggregate> {
        let mut v = self.values(metric);
        if v.is_empty() {
            return None;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.sort_unstable_by(f64::total_cmp);
        let rank = if metric == "ssim" { 5 } else { 95 };
        Some(Aggregate {
            mean,
            percentile: nearest_rank(&v, rank as f64),
            percentile_rank: rank,
        })
    }

    fn mm(&self, metric: &str, px: f64) -> Option<f64> {
        (unit_of(metric) == Unit::Pixels).then(|| px * self.pixel_spacing_mm)
    }

    /// `frame,metric,px_value,mm_value`, per-frame rows then the aggregates
    /// (`mean` and `p5`/`p95` in the frame column). Non-motion metrics leave
    /// the mm column empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,metric,px_value,mm_value\n");
        let fmt_mm = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.6},{}",
                r.frame,
                r.metric,
                r.value,
                fmt_mm(self.mm(r.metric, r.value))
            );
        }
        for (metric, _) in METRICS {
            if let Some(a) = self.aggregate(metric) {
                let _ = writeln!(
                    s,
                    "mean,{metric},{:.6},{}",
                    a.mean,
                    fmt_mm(self.mm(metric, a.mean))
                );
                let _ = writeln!(
                    s,
                    "p{},{metric},{:.6},{}",
                    a.percentile_rank,
                    a.percentile,
                    fmt_mm(self.mm(metric, a.percentile))
                );
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub registration: RegistrationConfig,
    pub pixel_spacing_mm: f64,
    pub motion_diff: MotionDiff,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            registration: RegistrationConfig::default(),
            pixel_spacing_mm: DEFAULT_PIXEL_SPACING_MM,
            motion_diff: MotionDiff::Vector,
        }
    }
}

/// Inputs of a full evaluation. Frame indices are full-rate indices into
/// `truth`.
#[derive(Debug, Clone, Copy)]
pub struct EvalInputs<'a> {
    pub predictions: &'a [Image],
    pub indices: &'a [usize],
    pub truth: &'a [Image],
    /// Predicted `t -> t+1` flow of every prediction.
    pub flows: Option<&'a [Flow]>,
    /// Landmarks of every truth frame.
    pub landmarks: Option<&'a [Vec<Landmark>]>,
    pub roi: Option<&'a Mask>,
    pub reference: usize,
}

/// Score every prediction. Gold-standard registrations of truth frames are
/// computed once and shared between metrics.
pub fn evaluate(inputs: &EvalInputs<'_>, cfg: &EvalConfig) -> Result<MetricsReport> {
    let n = inputs.predictions.len();
    if inputs.indices.len() != n {
        return Err(shape_mismatch("evaluate", &[n], &[inputs.indices.len()]));
    }
    let reference = inputs.truth.get(inputs.reference).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "reference frame {} is out of range",
            inputs.reference
        ))
    })?;
    for (&t, p) in inputs.indices.iter().zip(inputs.predictions) {
        let truth = inputs.truth.get(t).ok_or_else(|| {
            Error::InvalidConfig(format!("prediction index {t} has no truth frame"))
        })?;
        p.check_same_dims(truth, "evaluate")?;
    }
    if let Some(f) = inputs.flows {
        if f.len() != n {
            return Err(shape_mismatch("evaluate flows", &[n], &[f.len()]));
        }
    }

    let reg = &cfg.registration;
    let mut report = MetricsReport::new(cfg.pixel_spacing_mm);
    let mut gs: BTreeMap<usize, Flow> = BTreeMap::new();
    let mut gold = |s: usize| -> Result<Flow> {
        if let Some(f) = gs.get(&s) {
            return Ok(f.clone());
        }
        let f = register(&inputs.truth[s], reference, reg)?.flow;
        gs.insert(s, f.clone());
        Ok(f)
    };

    if inputs.flows.is_none() {
        report
            .notices
            .push("no predicted flows: ref_mot_err_fl and landmark_err skipped".into());
    }
    for (j, (&t, pred)) in inputs.indices.iter().zip(inputs.predictions).enumerate() {
        let truth = &inputs.truth[t];
        report.push(t, "rmse", rmse(pred, truth)?);
        report.push(t, "ssim", ssim_metric(pred, truth)?);
        report.push(
            t,
            "res_mot",
            res_mot(pred, truth, reg, cfg.pixel_spacing_mm)?.mean_px,
        );

        let f_pred = register(pred, reference, reg)?.flow;
        let f_truth = gold(t)?;
        report.push(
            t,
            "ref_mot_err_im",
            motion_difference(&f_pred, &f_truth, None, cfg.motion_diff)?,
        );
        if let Some(roi) = inputs.roi {
            report.push(
                t,
                "ref_mot_err_im_roi",
                motion_difference(&f_pred, &f_truth, Some(roi), cfg.motion_diff)?,
            );
        }

        let Some(flows) = inputs.flows else { continue };
        let flow = &flows[j];
        if t + 1 < inputs.truth.len() {
            let gs_next = gold(t + 1)?;
            let e = ref_mot_err_fl_from(flow, &gs_next, &f_truth, None)?;
            if !e.inversion_converged {
                report.inversion_flags.push(t);
            }
            report.push(t, "ref_mot_err_fl", e.px);
            if let Some(roi) = inputs.roi {
                let e = ref_mot_err_fl_from(flow, &gs_next, &f_truth, Some(roi))?;
                report.push(t, "ref_mot_err_fl_roi", e.px);
            }
        }
        if let Some(lm) = inputs.landmarks {
            if let (Some(a), Some(b)) = (lm.get(t), lm.get(t + 1)) {
                if !a.is_empty() {
                    report.push(t, "landmark_err", landmark_err(flow, a, b)?.mean_px);
                }
            }
        }
    }
    Ok(report)
}
