//! Single-channel images and dense 2D displacement fields.

use crate::autodiff::{Real, Tensor};
use crate::error::{shape_mismatch, Error, Result};

/// Single-channel 2D intensity array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_mismatch("Image::new", &[rows, cols], &[data.len()]));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f32) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    /// As a `1 x rows x cols` tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::new(
            &[1, self.rows, self.cols],
            self.data.iter().map(|&v| T::lit(v as f64)).collect(),
        )
        .expect("dims match")
    }

    /// From a tensor holding exactly `rows * cols` elements (`H x W` or
    /// `1 x H x W`).
    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<Self> {
        let (rows, cols) = match t.shape() {
            [h, w] | [1, h, w] => (*h, *w),
            s => return Err(shape_mismatch("Image::from_tensor", &[1, 0, 0], s)),
        };
        Self::new(
            rows,
            cols,
            t.data().iter().map(|v| v.as_f64() as f32).collect(),
        )
    }

    pub(crate) fn check_same_dims(&self, other: &Image, op: &'static str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(shape_mismatch(
                op,
                &[self.rows, self.cols],
                &[other.rows, other.cols],
            ));
        }
        Ok(())
    }
}

/// Dense displacement field between two frames.
///
/// Backward convention: the vector stored at pixel `x` of the flow
/// `from -> to` points from the `from` grid into frame `to`, so frame `from`
/// is reconstructed by sampling frame `to` at `x + flow(x)`.
///
/// Stored as two planes, row displacement then column displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    pub from: i64,
    pub to: i64,
}

impl Flow {
    pub fn zeros(rows: usize, cols: usize, from: i64, to: i64) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; 2 * rows * cols],
            from,
            to,
        }
    }

    /// Planar data: `rows * cols` row displacements then as many column
    /// displacements.
    pub fn from_planes(
        rows: usize,
        cols: usize,
        data: Vec<f32>,
        from: i64,
        to: i64,
    ) -> Result<Self> {
        if data.len() != 2 * rows * cols {
            return Err(shape_mismatch(
                "Flow::from_planes",
                &[2, rows, cols],
                &[data.len()],
            ));
        }
        let flow = Self {
            rows,
            cols,
            data,
            from,
            to,
        };
        if !flow.data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                op: "Flow::from_planes".into(),
            });
        }
        Ok(flow)
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        from: i64,
        to: i64,
        mut f: impl FnMut(usize, usize) -> [f64; 2],
    ) -> Self {
        let mut flow = Self::zeros(rows, cols, from, to);
        for r in 0..rows {
            for c in 0..cols {
                let [dr, dc] = f(r, c);
                flow.set(r, c, [dr as f32, dc as f32]);
            }
        }
        flow
    }

    pub fn constant(rows: usize, cols: usize, from: i64, to: i64, d: [f32; 2]) -> Self {
        Self::from_fn(rows, cols, from, to, |_, _| [d[0] as f64, d[1] as f64])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn planes(&self) -> &[f32] {
        &self.data
    }

    pub fn at(&self, r: usize, c: usize) -> [f32; 2] {
        let i = r * self.cols + c;
        [self.data[i], self.data[self.rows * self.cols + i]]
    }

    pub fn set(&mut self, r: usize, c: usize, d: [f32; 2]) {
        let i = r * self.cols + c;
        let n = self.rows * self.cols;
        self.data[i] = d[0];
        self.data[n + i] = d[1];
    }

    pub fn magnitude_at(&self, r: usize, c: usize) -> f64 {
        let [a, b] = self.at(r, c);
        (a as f64).hypot(b as f64)
    }

    pub fn max_magnitude(&self) -> f64 {
        let mut m = 0.0f64;
        for r in 0..self.rows {
            for c in 0..self.cols {
                m = m.max(self.magnitude_at(r, c));
            }
        }
        m
    }

    /// As a `2 x rows x cols` tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::new(
            &[2, self.rows, self.cols],
            self.data.iter().map(|&v| T::lit(v as f64)).collect(),
        )
        .expect("dims match")
    }

    pub fn from_tensor<T: Real>(t: &Tensor<T>, from: i64, to: i64) -> Result<Self> {
        let [2, rows, cols] = t.shape()[..] else {
            return Err(shape_mismatch("Flow::from_tensor", &[2, 0, 0], t.shape()));
        };
        Self::from_planes(
            rows,
            cols,
            t.data().iter().map(|v| v.as_f64() as f32).collect(),
            from,
            to,
        )
    }

    /// Element-wise `self - other`, tagged like `self`.
    pub fn sub(&self, other: &Flow) -> Result<Flow> {
        if self.dims() != other.dims() {
            return Err(shape_mismatch(
                "Flow::sub",
                &[2, self.rows, self.cols],
                &[2, other.rows, other.cols],
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Flow {
            data,
            ..self.clone()
        })
    }

    /// Multiply every displacement by `k`.
    pub fn scaled(&self, k: f32) -> Flow {
        Flow {
            data: self.data.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }
}

/// Boolean region of interest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_mismatch("Mask::new", &[rows, cols], &[data.len()]));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![true; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// All pixels at least `band` pixels away from the image border.
    pub fn interior(rows: usize, cols: usize, band: usize) -> Self {
        Self::from_fn(rows, cols, |r, c| {
            r >= band && c >= band && r + band < rows && c + band < cols
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        if self.dims() != other.dims() {
            return Err(shape_mismatch(
                "Mask::and",
                &[self.rows, self.cols],
                &[other.rows, other.cols],
            ));
        }
        Ok(Mask {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a && *b)
                .collect(),
            ..self.clone()
        })
    }

    /// Smallest `(row_min, row_max, col_min, col_max)` box holding every set
    /// pixel.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    bb = Some(match bb {
                        None => (r, r, c, c),
                        Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
                    });
                }
            }
        }
        bb
    }
}
