//! The restoration problem `min_u D(u) + alpha * TV(u)` with
//! `D(u) = 0.5 * |K u - z|^2 + 0.5 * mu * |grad u|^2`.

use crate::error::{Error, Result};
use crate::grid::{grad, GridShape, Image};
use crate::krylov::{KrylovConfig, KrylovError, KrylovSolution};
use crate::linops::{h_solve, DataOperator, LinearMap, NormalOperator};
use crate::prox::TvVariant;

#[derive(Clone, Debug)]
pub struct Problem {
    z: Image,
    k: DataOperator,
    mu: f64,
    alpha: f64,
    variant: TvVariant,
    f: Image,
}

impl Problem {
    pub fn new(z: Image, k: DataOperator, mu: f64, alpha: f64, variant: TvVariant) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(
                "alpha",
                format!("must be positive, got {alpha}"),
            ));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::invalid(
                "mu",
                format!("must be nonnegative, got {mu}"),
            ));
        }
        if !z.is_finite() {
            let index = z.values().iter().position(|v| !v.is_finite()).unwrap_or(0);
            return Err(Error::NonFinite { index });
        }
        k.validate(z.shape())?;
        if !k.is_identity() && mu == 0.0 {
            return Err(Error::invalid(
                "mu",
                "a blur operator needs mu > 0 for H = K*K - mu*Laplacian to be positive definite",
            ));
        }
        let f = k.apply_adjoint(&z);
        Ok(Self {
            z,
            k,
            mu,
            alpha,
            variant,
            f,
        })
    }

    /// ROF denoising: `K = I`, `mu = 0`.
    pub fn denoise(z: Image, alpha: f64, variant: TvVariant) -> Result<Self> {
        Self::new(z, DataOperator::Identity, 0.0, alpha, variant)
    }

    pub fn z(&self) -> &Image {
        &self.z
    }

    /// `f = K* z`.
    pub fn f(&self) -> &Image {
        &self.f
    }

    pub fn k(&self) -> &DataOperator {
        &self.k
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn variant(&self) -> TvVariant {
        self.variant
    }

    pub fn shape(&self) -> GridShape {
        self.z.shape()
    }

    pub fn h(&self) -> NormalOperator<'_> {
        NormalOperator::new(&self.k, self.mu)
    }

    pub fn h_solve(
        &self,
        b: &Image,
        cfg: &KrylovConfig,
    ) -> std::result::Result<KrylovSolution<Image>, KrylovError> {
        h_solve(b, self.mu, &self.k, cfg)
    }

    /// `D(u)`.
    pub fn data_term(&self, u: &Image) -> f64 {
        let fit = self.k.apply(u).sub(&self.z).norm();
        let mut d = 0.5 * fit * fit;
        if self.mu > 0.0 {
            let g = grad(u).norm();
            d += 0.5 * self.mu * g * g;
        }
        d
    }
}
