//! Naive double-precision references, written without any library code
//! beyond the tensor container.
#![allow(dead_code)]

use navinterp::autodiff::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn conv_ref(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, s: usize) -> Vec<f64> {
    let (cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, f) = (w.shape()[0], w.shape()[2]);
    let p = (f / 2) as isize;
    let (ho, wo) = (h.div_ceil(s), wd.div_ceil(s));
    let mut out = vec![0.0; cout * ho * wo];
    for o in 0..cout {
        for i in 0..ho {
            for j in 0..wo {
                let mut acc = b.data()[o];
                for c in 0..cin {
                    for u in 0..f {
                        for v in 0..f {
                            let r = (i * s) as isize + u as isize - p;
                            let q = (j * s) as isize + v as isize - p;
                            if r < 0 || q < 0 || r >= h as isize || q >= wd as isize {
                                continue;
                            }
                            let xv = x.data()[(c * h + r as usize) * wd + q as usize];
                            acc += w.data()[((o * cin + c) * f + u) * f + v] * xv;
                        }
                    }
                }
                out[(o * ho + i) * wo + j] = acc;
            }
        }
    }
    out
}

pub fn bilinear_ref(plane: &[f64], h: usize, w: usize, r: f64, c: f64) -> f64 {
    let r = r.clamp(0.0, (h - 1) as f64);
    let c = c.clamp(0.0, (w - 1) as f64);
    let (r0, c0) = (r.floor() as usize, c.floor() as usize);
    let (r1, c1) = ((r0 + 1).min(h - 1), (c0 + 1).min(w - 1));
    let (a, b) = (r - r0 as f64, c - c0 as f64);
    let at = |i: usize, j: usize| plane[i * w + j];
    (1.0 - a) * ((1.0 - b) * at(r0, c0) + b * at(r0, c1)) + a * ((1.0 - b) * at(r1, c0) + b * at(r1, c1))
}

pub fn warp_ref(src: &[f64], ch: usize, h: usize, w: usize, flow: &[f64]) -> Vec<f64> {
    let n = h * w;
    let mut out = vec![0.0; ch * n];
    for c in 0..ch {
        for i in 0..h {
            for j in 0..w {
                let (dr, dc) = (flow[i * w + j], flow[n + i * w + j]);
                out[c * n + i * w + j] = bilinear_ref(&src[c * n..(c + 1) * n], h, w, i as f64 + dr, j as f64 + dc);
            }
        }
    }
    out
}

pub fn ssim_ref(x: &[f64], y: &[f64], h: usize, w: usize, k: usize, c1: f64, c2: f64) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    let kk = (k * k) as f64;
    for i in 0..=h - k {
        for j in 0..=w - k {
            let (mut sx, mut sy) = (0.0, 0.0);
            for u in 0..k {
                for v in 0..k {
                    sx += x[(i + u) * w + j + v];
                    sy += y[(i + u) * w + j + v];
                }
            }
            let (mx, my) = (sx / kk, sy / kk);
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for u in 0..k {
                for v in 0..k {
                    let a = x[(i + u) * w + j + v] - mx;
                    let b = y[(i + u) * w + j + v] - my;
                    vx += a * a;
                    vy += b * b;
                    cov += a * b;
                }
            }
            let (vx, vy, cov) = (vx / kk, vy / kk, cov / kk);
            total += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Anisotropic TV of a `2 x n x n` field, averaged over its elements.
pub fn tv_ref(d: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for c in 0..2 {
        for i in 0..n {
            for j in 0..n {
                let at = |i: usize, j: usize| d[(c * n + i) * n + j];
                if i + 1 < n {
                    s += (at(i + 1, j) - at(i, j)).abs();
                }
                if j + 1 < n {
                    s += (at(i, j + 1) - at(i, j)).abs();
                }
            }
        }
    }
    s / (2 * n * n) as f64
}
