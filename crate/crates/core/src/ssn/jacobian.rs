use crate::grid::{div, grad, GridShape, Image, VecField};
use crate::linops::{LinearMap, NormalOperator};

/// A 2x2 matrix per pixel acting on vector fields.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelMatrixField {
    shape: GridShape,
    a11: Vec<f64>,
    a12: Vec<f64>,
    a21: Vec<f64>,
    a22: Vec<f64>,
}

impl PixelMatrixField {
    pub fn zeros(shape: GridShape) -> Self {
        let n = shape.len();
        Self {
            shape,
            a11: vec![0.0; n],
            a12: vec![0.0; n],
            a21: vec![0.0; n],
            a22: vec![0.0; n],
        }
    }

    pub fn from_fn(shape: GridShape, mut f: impl FnMut(usize) -> [[f64; 2]; 2]) -> Self {
        let mut m = Self::zeros(shape);
        for k in 0..shape.len() {
            m.set(k, f(k));
        }
        m
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    /// Matrix at flat pixel index `k`.
    pub fn at(&self, k: usize) -> [[f64; 2]; 2] {
        [[self.a11[k], self.a12[k]], [self.a21[k], self.a22[k]]]
    }

    pub fn set(&mut self, k: usize, m: [[f64; 2]; 2]) {
        self.a11[k] = m[0][0];
        self.a12[k] = m[0][1];
        self.a21[k] = m[1][0];
        self.a22[k] = m[1][1];
    }

    pub fn apply(&self, g: &VecField) -> VecField {
        let (g1, g2) = (g.chan1(), g.chan2());
        let n = self.shape.len();
        let mut c1 = Vec::with_capacity(n);
        let mut c2 = Vec::with_capacity(n);
        for k in 0..n {
            c1.push(self.a11[k] * g1[k] + self.a12[k] * g2[k]);
            c2.push(self.a21[k] * g1[k] + self.a22[k] * g2[k]);
        }
        VecField::from_raw(self.shape, c1, c2)
    }

    pub fn apply_transpose(&self, g: &VecField) -> VecField {
        let (g1, g2) = (g.chan1(), g.chan2());
        let n = self.shape.len();
        let mut c1 = Vec::with_capacity(n);
        let mut c2 = Vec::with_capacity(n);
        for k in 0..n {
            c1.push(self.a11[k] * g1[k] + self.a21[k] * g2[k]);
            c2.push(self.a12[k] * g1[k] + self.a22[k] * g2[k]);
        }
        VecField::from_raw(self.shape, c1, c2)
    }

    pub fn is_symmetric(&self) -> bool {
        self.a12 == self.a21
    }
}

/// `v -> H v - div(J grad v)`, the common form of every Newton operator
/// acting on images.
#[derive(Clone, Debug)]
pub struct NewtonOperator<'a> {
    pub h: NormalOperator<'a>,
    pub jac: PixelMatrixField,
}

impl<'a> NewtonOperator<'a> {
    pub fn new(h: NormalOperator<'a>, jac: PixelMatrixField) -> Self {
        Self { h, jac }
    }
}

impl LinearMap<Image> for NewtonOperator<'_> {
    fn apply(&self, v: &Image) -> Image {
        let inner = div(&self.jac.apply(&grad(v)));
        self.h.apply(v).sub(&inner)
    }

    fn apply_adjoint(&self, v: &Image) -> Image {
        let inner = div(&self.jac.apply_transpose(&grad(v)));
        self.h.apply(v).sub(&inner)
    }

    fn is_self_adjoint(&self) -> bool {
        self.jac.is_symmetric()
    }
}
