mod reference;

use navinterp::autodiff::{Graph, Tensor};
use navinterp::evaluation::rmse;
use navinterp::flow::endpoint_error;
use navinterp::image::{Flow, Image};
use navinterp::losses::{self, LossWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reference::*;

const N: usize = 32;
const TOL: f64 = 1e-5;

#[test]
fn conv2d_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (cin, cout, f, s) in [(4, 16, 7, 2), (3, 5, 5, 2), (6, 8, 3, 1), (5, 2, 3, 1), (2, 1, 3, 1)] {
        let x = random(&mut rng, &[cin, N, N], -1.0, 1.0);
        let w = random(&mut rng, &[cout, cin, f, f], -1.0, 1.0);
        let b = random(&mut rng, &[cout], -1.0, 1.0);
        let expected = conv_ref(&x, &w, &b, s);
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.constant(x), g.constant(w), g.constant(b));
        let y = g.conv2d(xv, wv, bv, s).unwrap();
        let d = max_diff(g.value(y).data(), &expected);
        assert!(d < TOL, "conv {cin}->{cout} f{f} s{s}: {d}");
    }
}

#[test]
fn single_precision_conv_tracks_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&mut rng, &[8, N, N], -1.0, 1.0);
    let w = random(&mut rng, &[3, 8, 3, 3], -0.3, 0.3);
    let b = random(&mut rng, &[3], -1.0, 1.0);
    let expected = conv_ref(&x, &w, &b, 1);
    let mut g = Graph::<f32>::new();
    let (xv, wv, bv) = (g.constant(x.cast()), g.constant(w.cast()), g.constant(b.cast()));
    let y = g.conv2d(xv, wv, bv, 1).unwrap();
    let got: Vec<f64> = g.value(y).data().iter().map(|&v| v as f64).collect();
    assert!(max_diff(&got, &expected) < 1e-5);
}

#[test]
fn upsample_matches_half_position_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&mut rng, &[2, N / 2, N / 2], -1.0, 1.0);
    let n = (N / 2) * (N / 2);
    let mut expected = Vec::new();
    for c in 0..2 {
        for i in 0..N {
            for j in 0..N {
                expected.push(bilinear_ref(&x.data()[c * n..(c + 1) * n], N / 2, N / 2, i as f64 / 2.0, j as f64 / 2.0));
            }
        }
    }
    let mut g = Graph::new();
    let xv = g.constant(x);
    let y = g.upsample2x(xv).unwrap();
    assert!(max_diff(g.value(y).data(), &expected) < TOL);
}

#[test]
fn warp_matches_naive_bilinear() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let src = random(&mut rng, &[3, N, N], 0.0, 1.0);
        let flow = random(&mut rng, &[2, N, N], -4.0, 4.0);
        let expected = warp_ref(src.data(), 3, N, N, flow.data());
        let mut g = Graph::new();
        let (s, f) = (g.constant(src), g.constant(flow));
        let y = g.warp(s, f).unwrap();
        assert!(max_diff(g.value(y).data(), &expected) < TOL);
    }
}

#[test]
fn compose_matches_naive_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let ab = random(&mut rng, &[2, N, N], -3.0, 3.0);
        let bc = random(&mut rng, &[2, N, N], -3.0, 3.0);
        let moved = warp_ref(bc.data(), 2, N, N, ab.data());
        let expected: Vec<f64> = ab.data().iter().zip(&moved).map(|(a, b)| a + b).collect();
        let mut g = Graph::new();
        let (a, b) = (g.constant(ab), g.constant(bc));
        let y = g.compose(a, b).unwrap();
        assert!(max_diff(g.value(y).data(), &expected) < TOL);
    }
}

#[test]
fn ssim_matches_naive_windows() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for k in [11, 7, 3] {
        let w = LossWeights {
            ssim_patch: k,
            ..LossWeights::default()
        };
        let x = random(&mut rng, &[1, N, N], 0.0, 1.0);
        let noise = random(&mut rng, &[1, N, N], -0.2, 0.2);
        let y = Tensor::new(&[1, N, N], x.data().iter().zip(noise.data()).map(|(a, b)| 0.8 * a + b).collect()).unwrap();
        let expected = ssim_ref(x.data(), y.data(), N, N, k, w.c1, w.c2);
        let mut g = Graph::new();
        let (a, b) = (g.constant(x), g.constant(y));
        let s = losses::ssim(&mut g, a, b, &w).unwrap();
        let got = g.value(s).item();
        assert!((got - expected).abs() < TOL, "k={k}: {got} vs {expected}");
    }
}

#[test]
fn tv_matches_naive_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let f = random(&mut rng, &[2, N, N], -3.0, 3.0);
    let expected = tv_ref(f.data(), N);
    let mut g = Graph::new();
    let v = g.constant(f);
    let t = losses::tv_loss(&mut g, v).unwrap();
    assert!((g.value(t).item() - expected).abs() < TOL);
}

#[test]
fn endpoint_and_rmse_match_naive_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a: Vec<f32> = (0..2 * N * N).map(|_| rng.random_range(-3.0..3.0)).collect();
    let b: Vec<f32> = (0..2 * N * N).map(|_| rng.random_range(-3.0..3.0)).collect();
    let fa = Flow::from_planes(N, N, a.clone(), 0, 1).unwrap();
    let fb = Flow::from_planes(N, N, b.clone(), 0, 1).unwrap();
    let n = N * N;
    let expected = (0..n)
        .map(|i| {
            let dr = a[i] as f64 - b[i] as f64;
            let dc = a[n + i] as f64 - b[n + i] as f64;
            (dr * dr + dc * dc).sqrt()
        })
        .sum::<f64>()
        / n as f64;
    assert!((endpoint_error(&fa, &fb, None).unwrap() - expected).abs() < TOL);

    let x = Image::new(N, N, a[..n].to_vec()).unwrap();
    let y = Image::new(N, N, b[..n].to_vec()).unwrap();
    let mse = (0..n).map(|i| (a[i] as f64 - b[i] as f64).powi(2)).sum::<f64>() / n as f64;
    assert!((rmse(&x, &y).unwrap() - mse.sqrt()).abs() < TOL);
}

/// Oracle value on a fixed input pair, frozen from the naive reference.
#[test]
fn ssim_frozen_value() {
    let x = Image::from_fn(N, N, |r, c| ((r * 7 + c * 3) % 11) as f32 / 10.0);
    let y = Image::from_fn(N, N, |r, c| ((r * 5 + c * 2) % 13) as f32 / 12.0);
    let xs: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    let ys: Vec<f64> = y.data().iter().map(|&v| v as f64).collect();
    let w = LossWeights::default();
    let oracle = ssim_ref(&xs, &ys, N, N, 11, w.c1, w.c2);
    let got = losses::ssim_images(&x, &y, &w).unwrap();
    assert!((oracle - 0.008781201913).abs() < 1e-11);
    assert!((got - oracle).abs() < 1e-12);
}
