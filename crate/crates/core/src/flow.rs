//! Evaluation-time flow utilities.

use crate::error::{shape_mismatch, Error, Result};
use crate::image::{Flow, Mask};
use crate::layers::{sample_forward, sample_point};
use crate::models::nearest_rank;

/// Millimetres per pixel of the navigator images.
pub const DEFAULT_PIXEL_SPACING_MM: f64 = 1.33;

/// A tracked point in one frame, in (fractional) pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub frame: usize,
    pub id: u32,
    pub row: f64,
    pub col: f64,
}

#[derive(Debug, Clone)]
pub struct Inversion {
    pub flow: Flow,
    /// max |f(x + g(x)) + g(x)| over all pixels.
    pub residual: f64,
    pub iterations: usize,
    /// The last update moved no vector by more than the tolerance.
    pub converged: bool,
}

pub const DEFAULT_INVERSION_ITERS: usize = 50;
pub const DEFAULT_INVERSION_TOL: f64 = 0.01;

/// Invert `f: t -> s` into `s -> t` by the fixed point `g <- -f(x + g(x))`,
/// starting from `g = -f`. Failure to converge is reported, not raised.
pub fn invert_flow(f: &Flow, max_iters: usize, tol_px: f64) -> Result<Inversion> {
    if f.planes().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            op: "invert_flow".into(),
        });
    }
    let (h, w) = f.dims();
    let fd: Vec<f64> = f.planes().iter().map(|&v| v as f64).collect();
    let mut g: Vec<f64> = fd.iter().map(|v| -v).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let sampled = sample_forward(&fd, 2, h, w, &g);
        let mut step = 0.0f64;
        for i in 0..h * w {
            let (nr, nc) = (-sampled[i], -sampled[h * w + i]);
            step = step.max((nr - g[i]).hypot(nc - g[h * w + i]));
            g[i] = nr;
            g[h * w + i] = nc;
        }
        if step < tol_px {
            converged = true;
            break;
        }
    }
    let sampled = sample_forward(&fd, 2, h, w, &g);
    let residual = (0..h * w)
        .map(|i| (sampled[i] + g[i]).hypot(sampled[h * w + i] + g[h * w + i]))
        .fold(0.0, f64::max);
    let flow = Flow::from_planes(h, w, g.iter().map(|&v| v as f32).collect(), f.to, f.from)?;
    Ok(Inversion {
        flow,
        residual,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnitudeStats {
    pub mean_px: f64,
    pub p95_px: f64,
    pub mean_mm: f64,
    pub p95_mm: f64,
}

fn check_mask(op: &'static str, f: &Flow, mask: Option<&Mask>) -> Result<()> {
    if let Some(m) = mask {
        if m.dims() != f.dims() {
            let (a, b) = (f.dims(), m.dims());
            return Err(shape_mismatch(op, &[a.0, a.1], &[b.0, b.1]));
        }
        if m.count() == 0 {
            return Err(Error::EmptyMask);
        }
    }
    Ok(())
}

fn masked<'a>(f: &'a Flow, mask: Option<&'a Mask>) -> impl Iterator<Item = (usize, usize)> + 'a {
    let (h, w) = f.dims();
    (0..h)
        .flat_map(move |r| (0..w).map(move |c| (r, c)))
        .filter(move |&(r, c)| mask.is_none_or(|m| m.get(r, c)))
}

/// Mean and nearest-rank 95th percentile of the per-pixel magnitude.
pub fn flow_magnitude_stats(
    f: &Flow,
    mask: Option<&Mask>,
    pixel_spacing_mm: f64,
) -> Result<MagnitudeStats> {
    check_mask("flow_magnitude_stats", f, mask)?;
    let mut mags: Vec<f64> = masked(f, mask).map(|(r, c)| f.magnitude_at(r, c)).collect();
    if mags.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mean = mags.iter().sum::<f64>() / mags.len() as f64;
    mags.sort_unstable_by(f64::total_cmp);
    let p95 = nearest_rank(&mags, 95.0);
    Ok(MagnitudeStats {
        mean_px: mean,
        p95_px: p95,
        mean_mm: mean * pixel_spacing_mm,
        p95_mm: p95 * pixel_spacing_mm,
    })
}

/// Bilinear interpolation of the flow at a fractional position.
pub fn sample_flow_at(f: &Flow, row: f64, col: f64) -> Result<[f64; 2]> {
    let (h, w) = f.dims();
    let inside = |v: f64, n: usize| v >= 0.0 && v <= (n as f64 - 1.0);
    if !(inside(row, h) && inside(col, w)) {
        return Err(Error::OutOfBounds {
            row,
            col,
            rows: h,
            cols: w,
        });
    }
    let planes: Vec<f64> = f.planes().iter().map(|&v| v as f64).collect();
    let v = sample_point(&planes, 2, h, w, row, col);
    Ok([v[0], v[1]])
}

/// Mean per-pixel Euclidean norm of `f - f_ref` over the mask.
pub fn endpoint_error(f: &Flow, f_ref: &Flow, mask: Option<&Mask>) -> Result<f64> {
    if f.dims() != f_ref.dims() {
        let (a, b) = (f.dims(), f_ref.dims());
        return Err(shape_mismatch(
            "endpoint_error",
            &[2, a.0, a.1],
            &[2, b.0, b.1],
        ));
    }
    check_mask("endpoint_error", f, mask)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (r, c) in masked(f, mask) {
        let [a, b] = f.at(r, c);
        let [x, y] = f_ref.at(r, c);
        sum += (a as f64 - x as f64).hypot(b as f64 - y as f64);
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invert_constant_and_zero() {
        let f = Flow::constant(8, 8, 0, 1, [2.0, 0.0]);
        let inv = invert_flow(&f, 50, 0.01).unwrap();
        assert!(inv.converged);
        assert_eq!(inv.residual, 0.0);
        assert_eq!((inv.flow.from, inv.flow.to), (1, 0));
        assert_eq!(inv.flow.at(3, 3), [-2.0, 0.0]);

        let z = invert_flow(&Flow::zeros(4, 4, 0, 1), 50, 0.01).unwrap();
        assert!(z.flow.planes().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_convergence_is_flagged() {
        let f = Flow::from_fn(16, 16, 0, 1, |r, _| [(r as f64 * 0.9).sin() * 6.0, 0.0]);
        let inv = invert_flow(&f, 1, 1e-9).unwrap();
        assert!(!inv.converged);
        assert_eq!(inv.iterations, 1);
    }

    #[test]
    fn magnitude_examples() {
        let s = flow_magnitude_stats(&Flow::constant(5, 5, 0, 1, [3.0, 4.0]), None, 1.0).unwrap();
        assert_eq!((s.mean_px, s.p95_px), (5.0, 5.0));
        let s = flow_magnitude_stats(&Flow::zeros(5, 5, 0, 1), None, 1.0).unwrap();
        assert_eq!((s.mean_px, s.p95_px), (0.0, 0.0));
        let s = flow_magnitude_stats(
            &Flow::constant(5, 5, 0, 1, [1.0, 0.0]),
            None,
            DEFAULT_PIXEL_SPACING_MM,
        )
        .unwrap();
        assert_eq!(s.mean_mm, 1.33);
        let empty = Mask::from_fn(5, 5, |_, _| false);
        assert!(matches!(
            flow_magnitude_stats(&Flow::zeros(5, 5, 0, 1), Some(&empty), 1.0),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn sample_examples() {
        let f = Flow::from_fn(4, 4, 0, 1, |r, c| [r as f64, (c * c) as f64]);
        assert_eq!(sample_flow_at(&f, 2.0, 3.0).unwrap(), [2.0, 9.0]);
        // midpoint of (1,1), (1,2), (2,1), (2,2)
        assert_eq!(sample_flow_at(&f, 1.5, 1.5).unwrap(), [1.5, 2.5]);
        let k = Flow::constant(4, 4, 0, 1, [0.25, -1.0]);
        assert_eq!(sample_flow_at(&k, 0.3, 2.9).unwrap(), [0.25, -1.0]);
        assert!(sample_flow_at(&f, -0.1, 0.0).is_err());
        assert!(sample_flow_at(&f, 0.0, 3.01).is_err());
    }

    #[test]
    fn endpoint_examples() {
        let a = Flow::from_fn(6, 6, 0, 1, |r, c| [r as f64 * 0.1, c as f64]);
        assert_eq!(endpoint_error(&a, &a, None).unwrap(), 0.0);
        let b = Flow::from_fn(6, 6, 0, 1, |r, c| [r as f64 * 0.1, c as f64 + 1.0]);
        assert_eq!(endpoint_error(&b, &a, None).unwrap(), 1.0);
        assert!(endpoint_error(&a, &Flow::zeros(5, 6, 0, 1), None).is_err());
    }
}
