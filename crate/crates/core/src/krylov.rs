//! Matrix-free CG and BiCGSTAB over any [`KrylovVector`] space.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{dot, Image, VecField};
use crate::linops::LinearMap;

/// Lower clamp for every relative Krylov tolerance.
pub const TOL_FLOOR: f64 = 1e-13;

/// Breakdown threshold for BiCGSTAB, applied to the cosines
/// `rho / (|r_hat| |r|)` and `r_hat'v / (|r_hat| |v|)` and to `omega`.
pub const BREAKDOWN: f64 = 1e-30;

/// Shadow-residual restarts allowed after a `rho` breakdown.
const MAX_RESTARTS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KrylovError {
    #[error("{method} did not converge in {iterations} iterations (relative residual {rel_residual:e}, target {target:e})")]
    MaxIterations {
        method: &'static str,
        iterations: usize,
        rel_residual: f64,
        target: f64,
    },
    #[error("CG detected a non-positive curvature p'Ap = {curvature:e} at iteration {iteration}")]
    Indefinite { iteration: usize, curvature: f64 },
    #[error("BiCGSTAB breakdown ({quantity} = {value:e}) at iteration {iteration}")]
    Breakdown {
        quantity: &'static str,
        value: f64,
        iteration: usize,
    },
    #[error("invalid Krylov configuration: {0}")]
    Config(String),
}

/// Vector-space operations the Krylov solvers need.
pub trait KrylovVector: Clone {
    fn dot(&self, other: &Self) -> f64;
    /// `self += a * x`
    fn axpy(&mut self, a: f64, x: &Self);
    /// `self = x + b * self`
    fn xpby(&mut self, x: &Self, b: f64);
    fn zeros_like(&self) -> Self;

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

impl KrylovVector for Image {
    fn dot(&self, other: &Self) -> f64 {
        dot(self.values(), other.values())
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        for (s, v) in self.values_mut().iter_mut().zip(x.values()) {
            *s += a * v;
        }
    }

    fn xpby(&mut self, x: &Self, b: f64) {
        for (s, v) in self.values_mut().iter_mut().zip(x.values()) {
            *s = v + b * *s;
        }
    }

    fn zeros_like(&self) -> Self {
        Image::zeros(self.shape())
    }
}

impl KrylovVector for VecField {
    fn dot(&self, other: &Self) -> f64 {
        dot(self.chan1(), other.chan1()) + dot(self.chan2(), other.chan2())
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        let (c1, c2) = self.channels_mut();
        for (s, v) in c1.iter_mut().zip(x.chan1()) {
            *s += a * v;
        }
        for (s, v) in c2.iter_mut().zip(x.chan2()) {
            *s += a * v;
        }
    }

    fn xpby(&mut self, x: &Self, b: f64) {
        let (c1, c2) = self.channels_mut();
        for (s, v) in c1.iter_mut().zip(x.chan1()) {
            *s = v + b * *s;
        }
        for (s, v) in c2.iter_mut().zip(x.chan2()) {
            *s = v + b * *s;
        }
    }

    fn zeros_like(&self) -> Self {
        VecField::zeros(self.shape())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KrylovMethod {
    Cg,
    Bicgstab,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrylovConfig {
    pub rel_tol: f64,
    pub max_iters: usize,
    pub method: KrylovMethod,
    /// When `max_iters` runs out, return the last iterate instead of an error
    /// if its relative residual is at most this value. Zero disables it.
    pub accept_partial: f64,
}

impl KrylovConfig {
    pub fn cg(rel_tol: f64, max_iters: usize) -> Self {
        Self {
            rel_tol,
            max_iters,
            method: KrylovMethod::Cg,
            accept_partial: 0.0,
        }
    }

    pub fn bicgstab(rel_tol: f64, max_iters: usize) -> Self {
        Self {
            rel_tol,
            max_iters,
            method: KrylovMethod::Bicgstab,
            accept_partial: 0.0,
        }
    }

    pub fn with_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    fn validate(&self) -> Result<(), KrylovError> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(KrylovError::Config(format!(
                "rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(KrylovError::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct KrylovSolution<V> {
    pub x: V,
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Dispatches on `cfg.method`.
pub fn solve<V, A>(a: &A, b: &V, cfg: &KrylovConfig) -> Result<KrylovSolution<V>, KrylovError>
where
    V: KrylovVector,
    A: LinearMap<V> + ?Sized,
{
    match cfg.method {
        KrylovMethod::Cg => cg_solve(a, b, cfg),
        KrylovMethod::Bicgstab => bicgstab_solve(a, b, cfg),
    }
}

fn exhausted<V>(
    method: &'static str,
    x: V,
    rel_residual: f64,
    cfg: &KrylovConfig,
) -> Result<KrylovSolution<V>, KrylovError> {
    if rel_residual <= cfg.accept_partial {
        return Ok(KrylovSolution {
            x,
            iterations: cfg.max_iters,
            rel_residual,
        });
    }
    Err(KrylovError::MaxIterations {
        method,
        iterations: cfg.max_iters,
        rel_residual,
        target: cfg.rel_tol,
    })
}

/// Conjugate gradients from a zero initial iterate. `a` must be
/// self-adjoint and positive definite on the Krylov space of `b`.
pub fn cg_solve<V, A>(a: &A, b: &V, cfg: &KrylovConfig) -> Result<KrylovSolution<V>, KrylovError>
where
    V: KrylovVector,
    A: LinearMap<V> + ?Sized,
{
    cfg.validate()?;
    let mut x = b.zeros_like();
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(KrylovSolution {
            x,
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let target = cfg.rel_tol * b_norm;
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for it in 1..=cfg.max_iters {
        let ap = a.apply(&p);
        let curvature = p.dot(&ap);
        if curvature <= 0.0 || !curvature.is_finite() {
            return Err(KrylovError::Indefinite {
                iteration: it,
                curvature,
            });
        }
        let step = rr / curvature;
        x.axpy(step, &p);
        r.axpy(-step, &ap);
        let rr_new = r.dot(&r);
        if rr_new.sqrt() <= target {
            return Ok(KrylovSolution {
                x,
                iterations: it,
                rel_residual: rr_new.sqrt() / b_norm,
            });
        }
        p.xpby(&r, rr_new / rr);
        rr = rr_new;
    }
    exhausted("CG", x, rr.sqrt() / b_norm, cfg)
}

/// Unpreconditioned BiCGSTAB from a zero initial iterate.
pub fn bicgstab_solve<V, A>(
    a: &A,
    b: &V,
    cfg: &KrylovConfig,
) -> Result<KrylovSolution<V>, KrylovError>
where
    V: KrylovVector,
    A: LinearMap<V> + ?Sized,
{
    cfg.validate()?;
    let mut x = b.zeros_like();
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(KrylovSolution {
            x,
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let target = cfg.rel_tol * b_norm;
    let mut r = b.clone();
    let mut r_hat = b.clone();
    let mut r_hat_norm = b_norm;
    let mut p = b.zeros_like();
    let mut v = b.zeros_like();
    let (mut rho_prev, mut step, mut omega) = (1.0, 1.0, 1.0);
    let mut r_norm = b_norm;
    let mut restarts = 0;
    for it in 1..=cfg.max_iters {
        let mut rho = r_hat.dot(&r);
        if rho.abs() < BREAKDOWN * r_hat_norm * r_norm {
            if restarts == MAX_RESTARTS {
                return Err(KrylovError::Breakdown {
                    quantity: "rho",
                    value: rho,
                    iteration: it,
                });
            }
            restarts += 1;
            r_hat = r.clone();
            r_hat_norm = r_norm;
            p = b.zeros_like();
            v = b.zeros_like();
            (rho_prev, step, omega) = (1.0, 1.0, 1.0);
            rho = r_hat.dot(&r);
        }
        let beta = (rho / rho_prev) * (step / omega);
        // p = r + beta * (p - omega * v)
        p.axpy(-omega, &v);
        p.xpby(&r, beta);
        v = a.apply(&p);
        let denom = r_hat.dot(&v);
        if denom.abs() < BREAKDOWN * r_hat_norm * v.norm() || !denom.is_finite() {
            return Err(KrylovError::Breakdown {
                quantity: "r_hat'v",
                value: denom,
                iteration: it,
            });
        }
        step = rho / denom;
        let mut s = r;
        s.axpy(-step, &v);
        let s_norm = s.norm();
        if s_norm <= target {
            x.axpy(step, &p);
            return Ok(KrylovSolution {
                x,
                iterations: it,
                rel_residual: s_norm / b_norm,
            });
        }
        let t = a.apply(&s);
        let tt = t.dot(&t);
        omega = if tt > 0.0 { t.dot(&s) / tt } else { 0.0 };
        x.axpy(step, &p);
        x.axpy(omega, &s);
        s.axpy(-omega, &t);
        r = s;
        r_norm = r.norm();
        if !r_norm.is_finite() {
            return Err(KrylovError::Breakdown {
                quantity: "residual",
                value: r_norm,
                iteration: it,
            });
        }
        if r_norm <= target {
            return Ok(KrylovSolution {
                x,
                iterations: it,
                rel_residual: r_norm / b_norm,
            });
        }
        if omega.abs() < BREAKDOWN {
            return Err(KrylovError::Breakdown {
                quantity: "omega",
                value: omega,
                iteration: it,
            });
        }
        rho_prev = rho;
    }
    exhausted("BiCGSTAB", x, r_norm / b_norm, cfg)
}

/// Inexact-Newton forcing term `0.1 * min(ratio^1.5, ratio)` with
/// `ratio = res_k / res_0`, clamped below at [`TOL_FLOOR`].
pub fn newton_forcing_tol(res_k: f64, res_0: f64) -> f64 {
    if !(res_0 > 0.0) || !res_k.is_finite() {
        return TOL_FLOOR;
    }
    let ratio = res_k / res_0;
    (0.1 * f64::min(ratio.powf(1.5), ratio)).clamp(TOL_FLOOR, 0.1)
}
