//! Element-wise arithmetic, reductions and the small structural operations
//! (finite differences, box filtering, channel selection) the losses need.

use super::{BackwardCtx, Graph, Op, Real, Tensor, Var};
use crate::error::{shape_mismatch, Result};

fn same_shape<T: Real>(g: &Graph<T>, op: &'static str, a: Var, b: Var) -> Result<()> {
    let (sa, sb) = (g.value(a).shape(), g.value(b).shape());
    if sa != sb {
        return Err(shape_mismatch(op, sa, sb));
    }
    Ok(())
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape(), data).expect("same shape")
}

fn map<T: Real>(a: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    Tensor::new(a.shape(), a.data().iter().map(|&x| f(x)).collect()).expect("same shape")
}

struct Add(Var, Var);
impl<T: Real> Op<T> for Add {
    fn name(&self) -> &'static str {
        "add"
    }
    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, og: &[T]) {
        for v in [self.0, self.1] {
            if let Some(g) = ctx.grad_mut(v) {
                g.iter_mut().zip(og).for_each(|(g, &o)| *g += o);
            }
        }
    }
}

struct Sub(Var, Var);
impl<T: Real> Op<T> for Sub {
    fn name(&self) -> &'static str {
        "sub"
    }
    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, og: &[T]) {
        if let Some(g) = ctx.grad_mut(self.0) {
            g.iter_mut().zip(og).for_each(|(g, &o)| *g += o);
        }
        if let Some(g) = ctx.grad_mut(self.1) {
            g.iter_mut().zip(og).for_each(|(g, &o)| *g -= o);
        }
    }
}

struct Mul(Var, Var);
impl<T: Real> Op<T> for Mul {
    fn name(&self) -> &'static str {
        "mul"
    }
    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, og: &[T]) {
        let (a, b) = (ctx.value(self.0).data(), ctx.value(self.1).data());
        if let Some(g) = ctx.grad_mut(self.0) {
            for i in 0..g.len() {
                g[i] += og[i] * b[i];
            }
        }
        if let Some(g) = ctx.grad_mut(self.1) {
            for i in 0..g.len() {
                g[i] += og[i] * a[i];
            }
        }
    }
}

struct Div(Var, Var);
impl<T: Real> Op<T> for Div {
    fn name(&self) -> &'static str {
        "div"
    }
    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, og: &[T]) {
        let (a, b) = (ctx.value(self.0).data(), ctx.value(self.1).data());
        if let Some(g) = ctx.grad_mut(self.0) {
            for i in 0..g.len() {
                g[i] += og[i] / b[i];
            }
        }
        if let Some(g) = ctx.grad_mut(self.1) {
            for i in 0..g.len() {
                g[i] -= og[i] * a[i] / (b[i] * b[i]);
            }
        }
    }
}

struct Scale<T>(Var, T);
impl<T: Real> Op<T> for Scale<T> {
    fn name(&self) -> &'static str {
        "scale"
    }
    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, og: &[T]) {
        let k = self.1;
        if let Some(g) = ctx.grad_mut(self.0) {
            g.iter_mut().zip(og).for_each(|(g, &o)| *g += o * k);
        }
    }
}

struct Shift(Var);
impl<T: Real> Op<T> for Shift {
    fn name(&self) -> &'static str {
        "add_scalar"
    }
    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, og: &[T]) {
        if let Some(g) = ctx.grad_mut(self.0) {
            g.iter_mut().zip(og).for_each(|(g, &o)| *g += o);
        }
    }
}

struct Relu(Var);
impl<T: Real> Op<T> for Relu {
    fn name(&self) -> &'static str {
        "relu"
    }
    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, og: &[T]) {
        let x = ctx.value(self.0).data();
        if let Some(g) = ctx.grad_mut(self.0) {
            for i in 0..g.len() {
                if x[i] > T::zero() {
                    g[i] += og[i];
                }
            }
        }
    }
}

struct Abs(Var);
impl<T: Real> Op<T> for Abs {
    fn name(&self) -> &'static str {
        "abs"
    }
    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, og: &[T]) {
        let x = ctx.value(self.0).data();
        if let Some(g) = ctx.grad_mut(self.0) {
            for i in 0..g.len() {
                if x[i] > T::zero() {
                    g[i] += og[i];
                } else if x[i] < T::zero() {
                    g[i] -= og[i];
                }
            }
        }
    }
}

struct Sqrt(Var);
impl<T: Real> Op<T> for Sqrt {
    fn name(&self) -> &'static str {
        "sqrt"
    }
    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, og: &[T]) {
        let x = ctx.value(self.0).data();
        let half = T::lit(0.5);
        if let Some(g) = ctx.grad_mut(self.0) {
            for i in 0..g.len() {
                g[i] += og[i] * half / x[i].sqrt();
            }
        }
    }
}

/// Sum (`scale == 1`) or mean (`scale == 1/n`) of every element.
struct SumAll {
    x: Var,
    scale: f64,
}
impl<T: Real> Op<T> for SumAll {
    fn name(&self) -> &'static str {
        "sum"
    }
    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, og: &[T]) {
        let o = og[0] * T::lit(self.scale);
        if let Some(g) = ctx.grad_mut(self.x) {
            g.iter_mut().for_each(|g| *g += o);
        }
    }
}

struct ForwardDiff {
    x: Var,
    axis: usize,
}
impl<T: Real> Op<T> for ForwardDiff {
    fn name(&self) -> &'static str {
        "forward_diff"
    }
    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, og: &[T]) {
        let (c, h, w) = ctx.value(self.x).chw().expect("rank 3");
        let axis = self.axis;
        if let Some(g) = ctx.grad_mut(self.x) {
            let (oh, ow) = if axis == 1 { (h - 1, w) } else { (h, w - 1) };
            let step = if axis == 1 { w } else { 1 };
            for ch in 0..c {
                for r in 0..oh {
                    for col in 0..ow {
                        let o = og[(ch * oh + r) * ow + col];
                        let base = (ch * h + r) * w + col;
                        g[base + step] += o;
                        g[base] -= o;
                    }
                }
            }
        }
    }
}

struct BoxMean {
    x: Var,
    k: usize,
}
impl<T: Real> Op<T> for BoxMean {
    fn name(&self) -> &'static str {
        "box_mean"
    }
    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, og: &[T]) {
        let (c, h, w) = ctx.value(self.x).chw().expect("rank 3");
        let k = self.k;
        let (oh, ow) = (h + 1 - k, w + 1 - k);
        let inv = T::one() / T::of_usize(k * k);
        if let Some(g) = ctx.grad_mut(self.x) {
            // Transpose of the separable forward: scatter vertically, then
            // horizontally.
            let mut hgrad = vec![T::zero(); h * ow];
            for ch in 0..c {
                hgrad.iter_mut().for_each(|v| *v = T::zero());
                for r in 0..oh {
                    for col in 0..ow {
                        let o = og[(ch * oh + r) * ow + col] * inv;
                        for u in 0..k {
                            hgrad[(r + u) * ow + col] += o;
                        }
                    }
                }
                let gx = &mut g[ch * h * w..(ch + 1) * h * w];
                for r in 0..h {
                    for col in 0..ow {
                        let o = hgrad[r * ow + col];
                        let row = &mut gx[r * w + col..r * w + col + k];
                        row.iter_mut().for_each(|v| *v += o);
                    }
                }
            }
        }
    }
}

struct SelectChannel {
    x: Var,
    channel: usize,
}
impl<T: Real> Op<T> for SelectChannel {
    fn name(&self) -> &'static str {
        "select_channel"
    }
    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, og: &[T]) {
        let n = og.len();
        let off = self.channel * n;
        if let Some(g) = ctx.grad_mut(self.x) {
            g[off..off + n]
                .iter_mut()
                .zip(og)
                .for_each(|(g, &o)| *g += o);
        }
    }
}

impl<T: Real> Graph<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "add", a, b)?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(v, &[a, b], Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "sub", a, b)?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(v, &[a, b], Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "mul", a, b)?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(v, &[a, b], Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, "div", a, b)?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x / y);
        Ok(self.push(v, &[a, b], Div(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let v = map(self.value(a), |x| x * k);
        self.push(v, &[a], Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: T) -> Var {
        let v = map(self.value(a), |x| x + k);
        self.push(v, &[a], Shift(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a).expect("same var")
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = map(self.value(a), |x| if x > T::zero() { x } else { T::zero() });
        self.push(v, &[a], Relu(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = map(self.value(a), |x| x.abs());
        self.push(v, &[a], Abs(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = map(self.value(a), |x| x.sqrt());
        self.push(v, &[a], Sqrt(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), &[a], SumAll { x: a, scale: 1.0 })
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let s: T = self.value(a).data().iter().copied().sum();
        self.push(
            Tensor::scalar(s / T::of_usize(n)),
            &[a],
            SumAll {
                x: a,
                scale: 1.0 / n as f64,
            },
        )
    }

    /// Forward differences along `axis` (1 = rows, 2 = columns) of a
    /// `C x H x W` tensor; the result is one shorter along that axis.
    pub fn forward_diff(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        let Some((c, h, w)) = t.chw() else {
            return Err(shape_mismatch("forward_diff", &[0, 0, 0], t.shape()));
        };
        assert!(axis == 1 || axis == 2, "axis must be 1 or 2");
        let (oh, ow) = if axis == 1 { (h - 1, w) } else { (h, w - 1) };
        let step = if axis == 1 { w } else { 1 };
        let d = t.data();
        let mut out = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for r in 0..oh {
                for col in 0..ow {
                    let base = (ch * h + r) * w + col;
                    out.push(d[base + step] - d[base]);
                }
            }
        }
        let v = Tensor::new(&[c, oh, ow], out)?;
        Ok(self.push(v, &[x], ForwardDiff { x, axis }))
    }

    /// Mean over every fully-interior `k x k` window, stride 1.
    pub fn box_mean(&mut self, x: Var, k: usize) -> Result<Var> {
        let t = self.value(x);
        let Some((c, h, w)) = t.chw() else {
            return Err(shape_mismatch("box_mean", &[0, k, k], t.shape()));
        };
        if k == 0 || h < k || w < k {
            return Err(shape_mismatch("box_mean", &[c, k, k], t.shape()));
        }
        let (oh, ow) = (h + 1 - k, w + 1 - k);
        let inv = T::one() / T::of_usize(k * k);
        let d = t.data();
        let mut out = vec![T::zero(); c * oh * ow];
        let mut hsum = vec![T::zero(); h * ow];
        for ch in 0..c {
            let x = &d[ch * h * w..(ch + 1) * h * w];
            for r in 0..h {
                for col in 0..ow {
                    hsum[r * ow + col] = x[r * w + col..r * w + col + k].iter().copied().sum();
                }
            }
            for r in 0..oh {
                for col in 0..ow {
                    let mut s = T::zero();
                    for u in 0..k {
                        s += hsum[(r + u) * ow + col];
                    }
                    out[(ch * oh + r) * ow + col] = s * inv;
                }
            }
        }
        let v = Tensor::new(&[c, oh, ow], out)?;
        Ok(self.push(v, &[x], BoxMean { x, k }))
    }

    /// Channel `channel` of a `C x H x W` tensor as `1 x H x W`.
    pub fn select_channel(&mut self, x: Var, channel: usize) -> Result<Var> {
        let t = self.value(x);
        let Some((c, h, w)) = t.chw() else {
            return Err(shape_mismatch(
                "select_channel",
                &[channel + 1, 0, 0],
                t.shape(),
            ));
        };
        if channel >= c {
            return Err(shape_mismatch(
                "select_channel",
                &[channel + 1, h, w],
                t.shape(),
            ));
        }
        let data = t.data()[channel * h * w..(channel + 1) * h * w].to_vec();
        let v = Tensor::new(&[1, h, w], data)?;
        Ok(self.push(v, &[x], SelectChannel { x, channel }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], d: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, d.to_vec()).unwrap()
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[3], &[1.0, 2.0, 3.0]));
        let sq = g.square(x);
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn constant_root_leaves_grads_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let c = g.constant(t(&[1], &[5.0]));
        g.backward(c).unwrap();
        assert_eq!(g.grad(x).data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(crate::Error::NonScalarRoot(_))));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[2], &[1.0, -2.0]));
        let sq = g.square(x);
        let s = g.sum(sq);
        g.backward(s).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).data(), &[4.0, -8.0]);
        g.zero_grad();
        assert_eq!(g.grad(x).data(), &[0.0, 0.0]);
    }

    #[test]
    fn constants_never_accumulate() {
        let mut g = Graph::<f64>::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let c = g.constant(t(&[2], &[3.0, 4.0]));
        let m = g.mul(x, c).unwrap();
        let s = g.sum(m);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).data(), &[3.0, 4.0]);
        assert!(g.grad_slice(c).is_none());
    }

    #[test]
    fn box_mean_matches_direct_average() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_fn(&[1, 4, 5], |i| i as f64));
        let b = g.box_mean(x, 3).unwrap();
        assert_eq!(g.value(b).shape(), &[1, 2, 3]);
        // window rows 0..3, cols 0..3 of a ramp with row stride 5
        let expect = (0..3)
            .flat_map(|r| (0..3).map(move |c| (r * 5 + c) as f64))
            .sum::<f64>()
            / 9.0;
        assert!((g.value(b).data()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut g = Graph::<f64>::new();
        let a = g.param(t(&[2], &[1.0, 2.0]));
        let b = g.param(t(&[3], &[1.0, 2.0, 3.0]));
        assert!(g.add(a, b).is_err());
    }
}
