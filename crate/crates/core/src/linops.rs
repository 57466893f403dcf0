//! Matrix-free linear operators: the data operator `K`, the normal
//! operator `H = K*K - mu * Laplacian`, and small helpers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{div, grad, GridShape, Image};
use crate::krylov::{cg_solve, KrylovConfig, KrylovError, KrylovSolution};

/// A linear operator known only through its action and its adjoint action.
pub trait LinearMap<V> {
    fn apply(&self, x: &V) -> V;
    fn apply_adjoint(&self, x: &V) -> V;
    fn is_self_adjoint(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityMap;

impl<V: Clone> LinearMap<V> for IdentityMap {
    fn apply(&self, x: &V) -> V {
        x.clone()
    }
    fn apply_adjoint(&self, x: &V) -> V {
        x.clone()
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
}

/// Dense matrix acting on an image read as a flat row-major vector.
/// Meant for tiny systems and test oracles.
#[derive(Clone, Debug)]
pub struct DenseMap {
    rows: Vec<Vec<f64>>,
}

impl DenseMap {
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "DenseMap must be square");
        Self { rows }
    }

    fn mul(&self, x: &[f64], transpose: bool) -> Vec<f64> {
        let n = self.rows.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let a = if transpose {
                            self.rows[j][i]
                        } else {
                            self.rows[i][j]
                        };
                        a * x[j]
                    })
                    .sum()
            })
            .collect()
    }
}

impl LinearMap<Image> for DenseMap {
    fn apply(&self, x: &Image) -> Image {
        Image::from_raw(x.shape(), self.mul(x.values(), false))
    }
    fn apply_adjoint(&self, x: &Image) -> Image {
        Image::from_raw(x.shape(), self.mul(x.values(), true))
    }
}

/// Odd-sized correlation stencil whose taps sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlurKernel {
    rows: usize,
    cols: usize,
    taps: Vec<f64>,
}

impl BlurKernel {
    pub fn new(rows: usize, cols: usize, taps: Vec<f64>) -> Result<Self> {
        if rows.is_multiple_of(2) || cols.is_multiple_of(2) {
            return Err(Error::invalid(
                "kernel",
                format!("support must be odd in both directions, got {rows}x{cols}"),
            ));
        }
        if taps.len() != rows * cols {
            return Err(Error::invalid(
                "kernel",
                format!("expected {} taps, got {}", rows * cols, taps.len()),
            ));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("kernel", "taps must be finite"));
        }
        let sum: f64 = taps.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "kernel",
                format!("taps sum to {sum}, not 1"),
            ));
        }
        Ok(Self { rows, cols, taps })
    }

    pub fn identity() -> Self {
        Self {
            rows: 1,
            cols: 1,
            taps: vec![1.0],
        }
    }

    /// Horizontal motion blur covering `length` pixels. Even lengths get an
    /// odd support of `length + 1` with half-weight end taps.
    pub fn motion(length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::invalid(
                "blur_len",
                "motion length must be at least 1",
            ));
        }
        let l = length as f64;
        let taps = if length % 2 == 1 {
            vec![1.0 / l; length]
        } else {
            let mut t = vec![1.0 / l; length + 1];
            t[0] = 0.5 / l;
            t[length] = 0.5 / l;
            t
        };
        let cols = taps.len();
        let sum: f64 = taps.iter().sum();
        let taps = taps.into_iter().map(|t| t / sum).collect();
        Self::new(1, cols, taps)
    }

    /// Truncated Gaussian with `radius` pixels on each side.
    pub fn gaussian(radius: usize, std: f64) -> Result<Self> {
        if !(std > 0.0) {
            return Err(Error::invalid("std", "Gaussian width must be positive"));
        }
        let n = 2 * radius + 1;
        let mut taps = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let (da, db) = (a as f64 - radius as f64, b as f64 - radius as f64);
                taps.push((-(da * da + db * db) / (2.0 * std * std)).exp());
            }
        }
        let sum: f64 = taps.iter().sum();
        Self::new(n, n, taps.into_iter().map(|t| t / sum).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    fn is_identity(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

#[inline]
fn clamp_index(base: usize, offset: usize, radius: usize, len: usize) -> usize {
    (base + offset).saturating_sub(radius).min(len - 1)
}

/// Correlation with replicate boundary extension.
pub fn blur_apply(u: &Image, kernel: &BlurKernel) -> Result<Image> {
    check_kernel_fits(kernel, u.shape())?;
    Ok(correlate(u, kernel))
}

/// Exact adjoint of [`blur_apply`]: scatters each output back to the
/// clamped source pixels it was read from.
pub fn blur_apply_adjoint(v: &Image, kernel: &BlurKernel) -> Result<Image> {
    check_kernel_fits(kernel, v.shape())?;
    Ok(correlate_adjoint(v, kernel))
}

fn check_kernel_fits(kernel: &BlurKernel, shape: GridShape) -> Result<()> {
    if kernel.rows > shape.rows() || kernel.cols > shape.cols() {
        return Err(Error::KernelTooLarge {
            kernel_rows: kernel.rows,
            kernel_cols: kernel.cols,
            shape,
        });
    }
    Ok(())
}

fn correlate(u: &Image, k: &BlurKernel) -> Image {
    let shape = u.shape();
    let (m, n) = (shape.rows(), shape.cols());
    let (ra, rb) = (k.rows / 2, k.cols / 2);
    let src = u.values();
    let mut out = vec![0.0; shape.len()];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for a in 0..k.rows {
                let si = clamp_index(i, a, ra, m);
                let row = &k.taps[a * k.cols..(a + 1) * k.cols];
                for (b, &w) in row.iter().enumerate() {
                    let sj = clamp_index(j, b, rb, n);
                    acc += w * src[si * n + sj];
                }
            }
            out[i * n + j] = acc;
        }
    }
    Image::from_raw(shape, out)
}

fn correlate_adjoint(v: &Image, k: &BlurKernel) -> Image {
    let shape = v.shape();
    let (m, n) = (shape.rows(), shape.cols());
    let (ra, rb) = (k.rows / 2, k.cols / 2);
    let src = v.values();
    let mut out = vec![0.0; shape.len()];
    for i in 0..m {
        for j in 0..n {
            let val = src[i * n + j];
            for a in 0..k.rows {
                let si = clamp_index(i, a, ra, m);
                let row = &k.taps[a * k.cols..(a + 1) * k.cols];
                for (b, &w) in row.iter().enumerate() {
                    let sj = clamp_index(j, b, rb, n);
                    out[si * n + sj] += w * val;
                }
            }
        }
    }
    Image::from_raw(shape, out)
}

/// The forward operator `K` of the data term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataOperator {
    Identity,
    Blur { kernel: BlurKernel },
}

impl DataOperator {
    /// Blur operator validated against the image it will act on.
    pub fn blur(kernel: BlurKernel, shape: GridShape) -> Result<Self> {
        check_kernel_fits(&kernel, shape)?;
        if kernel.is_identity() {
            return Ok(DataOperator::Identity);
        }
        Ok(DataOperator::Blur { kernel })
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, DataOperator::Identity)
    }

    pub fn validate(&self, shape: GridShape) -> Result<()> {
        match self {
            DataOperator::Identity => Ok(()),
            DataOperator::Blur { kernel } => check_kernel_fits(kernel, shape),
        }
    }
}

impl LinearMap<Image> for DataOperator {
    fn apply(&self, x: &Image) -> Image {
        match self {
            DataOperator::Identity => x.clone(),
            DataOperator::Blur { kernel } => correlate(x, kernel),
        }
    }

    fn apply_adjoint(&self, x: &Image) -> Image {
        match self {
            DataOperator::Identity => x.clone(),
            DataOperator::Blur { kernel } => correlate_adjoint(x, kernel),
        }
    }

    fn is_self_adjoint(&self) -> bool {
        self.is_identity()
    }
}

/// `H = K*K - mu * div grad`, self-adjoint and positive semidefinite.
#[derive(Clone, Copy, Debug)]
pub struct NormalOperator<'a> {
    pub k: &'a DataOperator,
    pub mu: f64,
}

impl<'a> NormalOperator<'a> {
    pub fn new(k: &'a DataOperator, mu: f64) -> Self {
        Self { k, mu }
    }

    /// True when `H` is the identity (denoising without extra smoothing).
    pub fn is_identity(&self) -> bool {
        self.k.is_identity() && self.mu == 0.0
    }

    /// `H` is positive definite when `K = I` or `mu > 0`.
    pub fn is_positive_definite(&self) -> bool {
        self.k.is_identity() || self.mu > 0.0
    }
}

impl LinearMap<Image> for NormalOperator<'_> {
    fn apply(&self, x: &Image) -> Image {
        let kk = match self.k {
            DataOperator::Identity => x.clone(),
            k => k.apply_adjoint(&k.apply(x)),
        };
        if self.mu == 0.0 {
            kk
        } else {
            kk.lin_comb(1.0, &div(&grad(x)), -self.mu)
        }
    }

    fn apply_adjoint(&self, x: &Image) -> Image {
        self.apply(x)
    }

    fn is_self_adjoint(&self) -> bool {
        true
    }
}

/// `H u = K*(K u) - mu * div(grad u)`.
pub fn h_apply(u: &Image, mu: f64, k: &DataOperator) -> Result<Image> {
    if !(mu >= 0.0) {
        return Err(Error::invalid(
            "mu",
            format!("must be nonnegative, got {mu}"),
        ));
    }
    k.validate(u.shape())?;
    Ok(NormalOperator::new(k, mu).apply(u))
}

/// `H^{-1} b` by CG; returns `b` unchanged when `H` is the identity.
pub fn h_solve(
    b: &Image,
    mu: f64,
    k: &DataOperator,
    cfg: &KrylovConfig,
) -> Result<KrylovSolution<Image>, KrylovError> {
    let h = NormalOperator::new(k, mu);
    if h.is_identity() {
        return Ok(KrylovSolution {
            x: b.clone(),
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    cg_solve(&h, b, cfg)
}
