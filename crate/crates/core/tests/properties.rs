use navinterp::autodiff::{Graph, Tensor};
use navinterp::flow::{endpoint_error, invert_flow};
use navinterp::formats;
use navinterp::image::{Flow, Image, Mask};
use navinterp::layers::{compose_flows, warp_image, TaggedFlow};
use navinterp::losses::{self, LossWeights};
use navinterp::registration::grid_dims;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

const N: usize = 16;

fn image() -> impl Strategy<Value = Image> {
    prop::collection::vec(0.0f32..1.0, N * N).prop_map(|d| Image::new(N, N, d).unwrap())
}

fn flow(max: f32) -> impl Strategy<Value = Flow> {
    prop::collection::vec(-max..max, 2 * N * N).prop_map(|d| Flow::from_planes(N, N, d, 0, 1).unwrap())
}

/// Smooth flow: a single low-frequency sinusoid per component.
///
/// Bilinear resampling of such a field is off by up to A k^2 / 8 ~ 0.02 px
/// per pass, which sets the tolerances below.
fn smooth_flow() -> impl Strategy<Value = Flow> {
    (-1.0f64..1.0, -1.0f64..1.0, 0.0f64..6.3, 0.0f64..6.3).prop_map(|(ar, ac, pr, pc)| {
        let k = std::f64::consts::TAU / N as f64;
        Flow::from_fn(N, N, 0, 1, |r, c| {
            [
                ar * (k * c as f64 + pr).sin(),
                ac * (k * r as f64 + pc).cos(),
            ]
        })
    })
}

fn ssim_of(x: &Image, y: &Image, w: &LossWeights) -> f64 {
    losses::ssim_images(x, y, w).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        rng_seed: RngSeed::Fixed(0x5eed),
        ..ProptestConfig::default()
    })]

    #[test]
    fn ssim_is_symmetric_and_bounded(x in image(), y in image()) {
        let w = LossWeights { ssim_patch: 5, ..LossWeights::default() };
        let a = ssim_of(&x, &y, &w);
        let b = ssim_of(&y, &x, &w);
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a > -1.0 && a <= 1.0 + 1e-12);
        prop_assert_eq!(ssim_of(&x, &x, &w), 1.0);
    }

    #[test]
    fn ssim_ignores_joint_scale_near_unit_range(x in image(), y in image()) {
        // Contrast-structure terms are scale free; only c1, c2 break exact
        // invariance, so a mild joint rescale barely moves the score.
        let w = LossWeights { ssim_patch: 5, ..LossWeights::default() };
        let scale = |im: &Image| Image::from_fn(N, N, |r, c| 0.9 * im.get(r, c));
        let d = (ssim_of(&x, &y, &w) - ssim_of(&scale(&x), &scale(&y), &w)).abs();
        prop_assert!(d < 0.02, "{}", d);
    }

    #[test]
    fn ssim_is_scale_free_with_scaled_constants(x in image(), y in image(), a in 0.1f64..10.0) {
        let w = LossWeights { ssim_patch: 5, ..LossWeights::default() };
        let scaled = LossWeights { c1: w.c1 * a * a, c2: w.c2 * a * a, ..w };
        let (xs, ys) = (x.to_tensor::<f64>(), y.to_tensor::<f64>());
        let mut g = Graph::<f64>::new();
        let (xv, yv) = (g.constant(xs.clone()), g.constant(ys.clone()));
        let (ax, ay) = (g.scale(xv, a), g.scale(yv, a));
        let base = losses::ssim(&mut g, xv, yv, &w).unwrap();
        let big = losses::ssim(&mut g, ax, ay, &scaled).unwrap();
        let d = (g.value(base).item() - g.value(big).item()).abs();
        prop_assert!(d < 1e-10, "{}", d);
    }

    #[test]
    fn losses_are_non_negative(x in image(), y in image(), f in flow(3.0), s in flow(3.0), b in flow(3.0)) {
        let mut g = Graph::<f64>::new();
        let xv = g.constant(x.to_tensor());
        let yv = g.constant(y.to_tensor());
        let (fv, sv, bv) = (g.constant(f.to_tensor()), g.constant(s.to_tensor()), g.constant(b.to_tensor()));
        let l2 = losses::l2_loss(&mut g, xv, yv).unwrap();
        let tv = losses::tv_loss(&mut g, fv).unwrap();
        let cyc = losses::cycle_loss(
            &mut g,
            TaggedFlow::new(fv, 0, 1),
            TaggedFlow::new(sv, 1, -1),
            TaggedFlow::new(bv, 0, -1),
        )
        .unwrap();
        let w = LossWeights::default();
        let r = losses::recon_loss(&mut g, xv, yv, &w).unwrap();
        for v in [l2, tv, cyc, r] {
            prop_assert!(g.value(v).item() >= 0.0);
        }
    }

    #[test]
    fn warped_pixels_stay_within_source_range(x in image(), f in flow(40.0)) {
        let out = warp_image(&x, &f).unwrap();
        let (lo, hi) = (x.min(), x.max());
        for &v in out.data() {
            prop_assert!(v >= lo - 1e-6 && v <= hi + 1e-6);
        }
    }

    #[test]
    fn double_inversion_recovers_smooth_flow(f in smooth_flow()) {
        let inv = invert_flow(&f, 100, 1e-6).unwrap();
        prop_assert!(inv.converged);
        let back = invert_flow(&inv.flow, 100, 1e-6).unwrap();
        prop_assert_eq!((back.flow.from, back.flow.to), (f.from, f.to));
        let interior = Mask::interior(N, N, 3);
        let e = endpoint_error(&back.flow, &f, Some(&interior)).unwrap();
        prop_assert!(e < 0.06, "{}", e);
    }

    #[test]
    fn flow_composed_with_its_inverse_vanishes(f in smooth_flow()) {
        let inv = invert_flow(&f, 100, 1e-6).unwrap();
        let interior = Mask::interior(N, N, 3);
        // The fixed point solves this order directly.
        let left = compose_flows(&inv.flow, &f).unwrap();
        prop_assert!(endpoint_error(&left, &Flow::zeros(N, N, 1, 1), None).unwrap() < 1e-5);
        let right = compose_flows(&f, &inv.flow).unwrap();
        prop_assert!(endpoint_error(&right, &Flow::zeros(N, N, 0, 0), Some(&interior)).unwrap() < 0.06);
    }

    #[test]
    fn endpoint_error_is_a_symmetric_distance(a in flow(3.0), b in flow(3.0)) {
        let ab = endpoint_error(&a, &b, None).unwrap();
        let ba = endpoint_error(&b, &a, None).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert_eq!(endpoint_error(&a, &a, None).unwrap(), 0.0);
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn grid_to_dense_is_linear(
        a in prop::collection::vec(-2.0f64..2.0, 2 * 25),
        b in prop::collection::vec(-2.0f64..2.0, 2 * 25),
        k in -3.0f64..3.0,
    ) {
        let (h, w, s) = (N, N, 4);
        prop_assume!(grid_dims(h, w, s) == (5, 5));
        let dense = |d: Vec<f64>| {
            let mut g = Graph::<f64>::new();
            let c = g.constant(Tensor::new(&[2, 5, 5], d).unwrap());
            let y = g.grid_to_dense(c, h, w, s).unwrap();
            g.value(y).data().to_vec()
        };
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| k * x + y).collect();
        let (da, db, dm) = (dense(a), dense(b), dense(mix));
        for i in 0..dm.len() {
            prop_assert!((dm[i] - (k * da[i] + db[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn sequence_and_flow_files_round_trip_bit_exactly(x in image(), y in image(), f in flow(5.0)) {
        let seq = formats::encode_sequence(&[x.clone(), y.clone()]).unwrap();
        prop_assert_eq!(seq.len(), 20 + 4 * 2 * N * N);
        let back = formats::decode_sequence(&seq).unwrap();
        prop_assert_eq!(back, vec![x, y]);
        let fl = formats::encode_flows(std::slice::from_ref(&f)).unwrap();
        prop_assert_eq!(formats::decode_flows(&fl).unwrap(), vec![f]);
    }
}
