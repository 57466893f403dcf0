//! Discrete image grid, scalar and two-channel fields, and the
//! forward-difference calculus shared by every solver.
//!
//! Index convention: `(i, j)` with `i` the row in `0..rows` and `j` the
//! column in `0..cols`; storage is row-major, flat index `i * cols + j`.
//! Channel 1 of a [`VecField`] is the difference along rows (`i`),
//! channel 2 along columns (`j`).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridShape {
    rows: usize,
    cols: usize,
}

impl GridShape {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(
                "shape",
                format!("grid must be at least 1x1, got {rows}x{cols}"),
            ));
        }
        Ok(Self { rows, cols })
    }

    /// Square grid; panics on zero, for tests and fixed-size fixtures.
    pub fn square(n: usize) -> Self {
        Self::new(n, n).expect("square grid side must be positive")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of pixels `M * N`.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.rows && j < self.cols);
        i * self.cols + j
    }

    fn check(&self, other: GridShape) -> Result<()> {
        if *self != other {
            return Err(Error::ShapeMismatch {
                expected: *self,
                found: other,
            });
        }
        Ok(())
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Scalar field on the grid (houses `u`, `z`, `f`).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    shape: GridShape,
    values: Vec<f64>,
}

impl Image {
    pub fn zeros(shape: GridShape) -> Self {
        Self::constant(shape, 0.0)
    }

    pub fn constant(shape: GridShape, value: f64) -> Self {
        Self {
            shape,
            values: vec![value; shape.len()],
        }
    }

    /// Builds an image from row-major values; rejects wrong lengths and
    /// non-finite entries.
    pub fn from_vec(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::LengthMismatch {
                shape,
                len: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self { shape, values })
    }

    pub fn from_fn(shape: GridShape, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(shape.len());
        for i in 0..shape.rows {
            for j in 0..shape.cols {
                values.push(f(i, j));
            }
        }
        Self { shape, values }
    }

    /// Internal constructor for solver outputs, skips the finiteness scan.
    pub(crate) fn from_raw(shape: GridShape, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), shape.len());
        Self { shape, values }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.shape.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.shape.index(i, j);
        self.values[k] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image::from_raw(self.shape, self.values.iter().map(|&v| f(v)).collect())
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Image, b: f64) -> Image {
        debug_assert_eq!(self.shape, other.shape);
        Image::from_raw(
            self.shape,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        )
    }

    pub fn add(&self, other: &Image) -> Image {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Image) -> Image {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn scaled(&self, a: f64) -> Image {
        self.map(|v| a * v)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Two-channel field on the grid (houses `p`, `lambda`, `h`, gradients).
#[derive(Clone, Debug, PartialEq)]
pub struct VecField {
    shape: GridShape,
    chan1: Vec<f64>,
    chan2: Vec<f64>,
}

impl VecField {
    pub fn zeros(shape: GridShape) -> Self {
        Self {
            shape,
            chan1: vec![0.0; shape.len()],
            chan2: vec![0.0; shape.len()],
        }
    }

    pub fn from_channels(shape: GridShape, chan1: Vec<f64>, chan2: Vec<f64>) -> Result<Self> {
        for c in [&chan1, &chan2] {
            if c.len() != shape.len() {
                return Err(Error::LengthMismatch {
                    shape,
                    len: c.len(),
                });
            }
        }
        check_finite(&chan1)?;
        check_finite(&chan2).map_err(|e| match e {
            Error::NonFinite { index } => Error::NonFinite {
                index: index + shape.len(),
            },
            other => other,
        })?;
        Ok(Self {
            shape,
            chan1,
            chan2,
        })
    }

    pub fn from_fn(shape: GridShape, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        let mut chan1 = Vec::with_capacity(shape.len());
        let mut chan2 = Vec::with_capacity(shape.len());
        for i in 0..shape.rows {
            for j in 0..shape.cols {
                let (a, b) = f(i, j);
                chan1.push(a);
                chan2.push(b);
            }
        }
        Self {
            shape,
            chan1,
            chan2,
        }
    }

    pub(crate) fn from_raw(shape: GridShape, chan1: Vec<f64>, chan2: Vec<f64>) -> Self {
        debug_assert_eq!(chan1.len(), shape.len());
        debug_assert_eq!(chan2.len(), shape.len());
        Self {
            shape,
            chan1,
            chan2,
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn chan1(&self) -> &[f64] {
        &self.chan1
    }

    pub fn chan2(&self) -> &[f64] {
        &self.chan2
    }

    pub fn channels_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.chan1, &mut self.chan2)
    }

    pub fn get(&self, i: usize, j: usize) -> (f64, f64) {
        let k = self.shape.index(i, j);
        (self.chan1[k], self.chan2[k])
    }

    pub fn is_finite(&self) -> bool {
        self.chan1.iter().chain(&self.chan2).all(|v| v.is_finite())
    }

    /// Applies `f` to every pixel pair `(chan1, chan2)`.
    pub fn map_pixels(&self, f: impl Fn(f64, f64) -> (f64, f64)) -> VecField {
        let mut out = VecField::zeros(self.shape);
        for k in 0..self.shape.len() {
            let (a, b) = f(self.chan1[k], self.chan2[k]);
            out.chan1[k] = a;
            out.chan2[k] = b;
        }
        out
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &VecField, b: f64) -> VecField {
        debug_assert_eq!(self.shape, other.shape);
        let comb = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(x, y)| a * x + b * y).collect()
        };
        VecField::from_raw(
            self.shape,
            comb(&self.chan1, &other.chan1),
            comb(&self.chan2, &other.chan2),
        )
    }

    pub fn add(&self, other: &VecField) -> VecField {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &VecField) -> VecField {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn scaled(&self, a: f64) -> VecField {
        self.map_pixels(|x, y| (a * x, a * y))
    }

    pub fn norm(&self) -> f64 {
        self.chan1
            .iter()
            .chain(&self.chan2)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &VecField) -> f64 {
        self.chan1
            .iter()
            .zip(&other.chan1)
            .chain(self.chan2.iter().zip(&other.chan2))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Forward differences with a zero last row (channel 1) and zero last
/// column (channel 2).
pub fn grad(u: &Image) -> VecField {
    let shape = u.shape;
    let (m, n) = (shape.rows, shape.cols);
    let v = &u.values;
    let mut out = VecField::zeros(shape);
    for i in 0..m {
        for j in 0..n {
            let k = i * n + j;
            if i + 1 < m {
                out.chan1[k] = v[k + n] - v[k];
            }
            if j + 1 < n {
                out.chan2[k] = v[k + 1] - v[k];
            }
        }
    }
    out
}

/// Backward-difference divergence, the exact negative adjoint of [`grad`].
pub fn div(p: &VecField) -> Image {
    let shape = p.shape;
    let (m, n) = (shape.rows, shape.cols);
    let mut out = vec![0.0; shape.len()];
    for i in 0..m {
        for j in 0..n {
            let k = i * n + j;
            let mut acc = 0.0;
            if i + 1 < m {
                acc += p.chan1[k];
            }
            if i > 0 {
                acc -= p.chan1[k - n];
            }
            if j + 1 < n {
                acc += p.chan2[k];
            }
            if j > 0 {
                acc -= p.chan2[k - 1];
            }
            out[k] = acc;
        }
    }
    Image::from_raw(shape, out)
}

/// `<u, v>_X`, an unweighted pixel sum.
pub fn inner_x(u: &Image, v: &Image) -> Result<f64> {
    u.shape.check(v.shape)?;
    Ok(dot(&u.values, &v.values))
}

/// `<p, q>_Y`, summed over both channels.
pub fn inner_y(p: &VecField, q: &VecField) -> Result<f64> {
    p.shape.check(q.shape)?;
    Ok(dot(&p.chan1, &q.chan1) + dot(&p.chan2, &q.chan2))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-pixel Euclidean magnitude `sqrt(p1^2 + p2^2)`.
pub fn pointwise_mag(p: &VecField) -> Image {
    Image::from_raw(
        p.shape,
        p.chan1
            .iter()
            .zip(&p.chan2)
            .map(|(a, b)| a.hypot(*b))
            .collect(),
    )
}

/// Discrete TV norm of a field: `sum |p|` (iso) or `sum |p1| + |p2|` (aniso).
pub fn tv_norm(p: &VecField, variant: crate::prox::TvVariant) -> f64 {
    use crate::prox::TvVariant;
    match variant {
        TvVariant::Iso => p.chan1.iter().zip(&p.chan2).map(|(a, b)| a.hypot(*b)).sum(),
        TvVariant::Aniso => p.chan1.iter().chain(&p.chan2).map(|v| v.abs()).sum(),
    }
}
