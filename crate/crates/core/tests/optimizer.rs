use navinterp::autodiff::{AdamState, Graph, Tensor};

/// Scalar Adam written out longhand.
fn reference_trajectory(steps: usize, lr: f64) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps as i32 {
        let g = 2.0 * (w - 3.0);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mhat = m / (1.0 - b1.powi(t));
        let vhat = v / (1.0 - b2.powi(t));
        w -= lr * mhat / (vhat.sqrt() + eps);
        out.push(w);
    }
    out
}

fn graph_trajectory(steps: usize, lr: f64) -> Vec<f64> {
    let mut params = vec![Tensor::scalar(0.0f64)];
    let mut adam = AdamState::new(&params, lr);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut g = Graph::new();
        let w = g.param(params[0].clone());
        let d = g.add_scalar(w, -3.0);
        let loss = g.square(d);
        g.backward(loss).unwrap();
        let grads = vec![g.grad(w)];
        adam.update(&mut params, &grads).unwrap();
        out.push(params[0].item());
    }
    out
}

#[test]
fn quadratic_trajectory_matches_scalar_reference() {
    let got = graph_trajectory(100, 0.1);
    let want = reference_trajectory(100, 0.1);
    for (i, (a, b)) in got.iter().zip(&want).enumerate() {
        assert!((a - b).abs() < 1e-12, "step {}: {a} vs {b}", i + 1);
    }
    // Frozen from the reference run.
    assert!((want[99] - 2.980_655_437_527_81).abs() < 1e-12);
}

#[test]
fn quadratic_excursions_shrink() {
    let w = reference_trajectory(100, 0.1);
    let err: Vec<f64> = w.iter().map(|x| x - 3.0).collect();
    // Monotone climb until the first crossing of 3.
    let cross = err.iter().position(|&e| e > 0.0).unwrap();
    assert!(err[..cross].windows(2).all(|p| p[1] > p[0]));
    // The overshoot peak is larger than the following undershoot peak.
    let over = err[cross..].iter().cloned().fold(0.0, f64::max);
    let back = err[cross..].iter().position(|&e| e < 0.0).unwrap() + cross;
    let under = err[back..].iter().cloned().fold(0.0, f64::min);
    assert!(over > 0.0 && under < 0.0);
    assert!(under.abs() < 0.25 * over, "overshoot {over}, undershoot {under}");
    assert!(err[80..].iter().all(|e| e.abs() < 0.03));
}
