//! Inner semismooth Newton solvers for one augmented Lagrangian
//! subproblem at fixed multiplier `lambda_k` and penalty `sigma_k`.
//!
//! * [`pdp`]: primal-dual system on `(u, h)`, reduced to `u` (BiCGSTAB).
//! * [`pdd`]: the same system reduced to `h` (BiCGSTAB, nested `H^{-1}`).
//! * [`pt`]: primal equation through the soft threshold (CG + Armijo).

mod jacobian;
pub mod pdd;
pub mod pdp;
pub mod pt;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub use jacobian::{NewtonOperator, PixelMatrixField};
pub use pdd::{ssnpdd_step, PddOperator};
pub use pdp::{pdp_schur_operator, ssnpdp_step};
pub use pt::{pt_newton_operator, ssnpt_step, LineSearchOutcome};

use crate::error::{Error, Result};
use crate::grid::{div, grad, tv_norm, Image, VecField};
use crate::krylov::{KrylovConfig, KrylovMethod};
use crate::linops::LinearMap;
use crate::problem::Problem;
use crate::prox::{project_ball_unchecked, soft_threshold_unchecked, TvVariant};

/// Everything fixed during one inner solve.
#[derive(Clone, Copy, Debug)]
pub struct AlmContext<'a> {
    pub problem: &'a Problem,
    pub lambda: &'a VecField,
    pub sigma: f64,
}

impl<'a> AlmContext<'a> {
    pub fn new(problem: &'a Problem, lambda: &'a VecField, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(
                "sigma",
                format!("must be positive, got {sigma}"),
            ));
        }
        if lambda.shape() != problem.shape() {
            return Err(Error::ShapeMismatch {
                expected: problem.shape(),
                found: lambda.shape(),
            });
        }
        Ok(Self {
            problem,
            lambda,
            sigma,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.problem.alpha()
    }

    pub fn variant(&self) -> TvVariant {
        self.problem.variant()
    }

    /// `lambda_k + sigma_k * grad u`.
    pub fn shifted(&self, u: &Image) -> VecField {
        self.lambda.lin_comb(1.0, &grad(u), self.sigma)
    }
}

/// Iterate of an inner Newton solve.
#[derive(Clone, Debug)]
pub struct NewtonState {
    pub u: Image,
    /// Auxiliary dual variable, kept feasible after every PDP/PDD step.
    pub h: VecField,
    pub inner_residual: f64,
    pub iteration: usize,
}

impl NewtonState {
    pub fn new(u: Image, h: VecField) -> Self {
        Self {
            u,
            h,
            inner_residual: f64::INFINITY,
            iteration: 0,
        }
    }
}

/// Active indicators per pixel (iso) or per channel (aniso); the iso mask
/// stores the same flag in both channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveMask {
    pub chan1: Vec<bool>,
    pub chan2: Vec<bool>,
}

impl ActiveMask {
    /// `|lambda + sigma grad u| >= alpha`, ties counted as active.
    pub fn primal_dual(w: &VecField, alpha: f64, variant: TvVariant) -> Self {
        Self::threshold(w, alpha, variant)
    }

    /// `|lambda / sigma + grad u| >= alpha / sigma`.
    pub fn thresholding(y: &VecField, tau: f64, variant: TvVariant) -> Self {
        Self::threshold(y, tau, variant)
    }

    fn threshold(w: &VecField, t: f64, variant: TvVariant) -> Self {
        let pairs = w.chan1().iter().zip(w.chan2());
        match variant {
            TvVariant::Iso => {
                let m: Vec<bool> = pairs.map(|(a, b)| a.hypot(*b) >= t).collect();
                Self {
                    chan1: m.clone(),
                    chan2: m,
                }
            }
            TvVariant::Aniso => Self {
                chan1: w.chan1().iter().map(|a| a.abs() >= t).collect(),
                chan2: w.chan2().iter().map(|b| b.abs() >= t).collect(),
            },
        }
    }

    pub fn count(&self) -> usize {
        self.chan1.iter().chain(&self.chan2).filter(|&&b| b).count()
    }
}

/// Armijo parameters: sufficient-decrease `mu_ls`, contraction `theta`,
/// initial step `eta0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSearchParams {
    pub mu_ls: f64,
    pub theta: f64,
    pub eta0: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            mu_ls: 1e-4,
            theta: 0.5,
            eta0: 1.0,
            max_backtracks: 40,
        }
    }
}

impl LineSearchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_ls > 0.0 && self.mu_ls < 0.5) {
            return Err(Error::invalid("mu_ls", "must lie in (0, 1/2)"));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::invalid("theta", "must lie in (0, 1)"));
        }
        if self.eta0 != 1.0 {
            return Err(Error::invalid("eta0", "the initial step is 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerMethod {
    Pdp,
    Pdd,
    Pt,
}

impl InnerMethod {
    pub fn name(&self) -> &'static str {
        match self {
            InnerMethod::Pdp => "SSNPDP",
            InnerMethod::Pdd => "SSNPDD",
            InnerMethod::Pt => "SSNPT",
        }
    }
}

impl fmt::Display for InnerMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InnerMethod::Pdp => "pdp",
            InnerMethod::Pdd => "pdd",
            InnerMethod::Pt => "pt",
        })
    }
}

impl FromStr for InnerMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pdp" => Ok(InnerMethod::Pdp),
            "pdd" => Ok(InnerMethod::Pdd),
            "pt" => Ok(InnerMethod::Pt),
            other => Err(Error::invalid(
                "solver",
                format!("unknown inner solver `{other}`"),
            )),
        }
    }
}

/// A Newton direction whose linear solve ran out of iterations is still used
/// when its relative residual meets the loosest forcing tolerance.
pub const NEWTON_ACCEPT_PARTIAL: f64 = 0.1;

/// Knobs of one inner solve.
#[derive(Clone, Copy, Debug)]
pub struct InnerConfig {
    /// Stop once the inner residual is at most this value (`delta / sigma`).
    pub threshold: f64,
    pub max_newton: usize,
    pub krylov_max_iters: usize,
    /// Relative tolerance for the nested `H^{-1}` solves of SSNPDD.
    pub nested_tol: f64,
    /// When set, overrides the forcing rule with a fixed relative tolerance.
    pub fixed_krylov_tol: Option<f64>,
    pub line_search: LineSearchParams,
    /// Outer iteration index, for error context only.
    pub outer: usize,
}

impl InnerConfig {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            max_newton: 50,
            krylov_max_iters: 5000,
            nested_tol: 1e-12,
            fixed_krylov_tol: None,
            line_search: LineSearchParams::default(),
            outer: 0,
        }
    }

    pub(crate) fn krylov(&self, method: KrylovMethod, rel_tol: f64) -> KrylovConfig {
        KrylovConfig {
            rel_tol,
            max_iters: self.krylov_max_iters,
            method,
            accept_partial: NEWTON_ACCEPT_PARTIAL,
        }
    }

    pub(crate) fn nested_krylov(&self) -> KrylovConfig {
        KrylovConfig::cg(self.nested_tol, self.krylov_max_iters.max(10_000))
    }
}

/// Per-step bookkeeping returned by every Newton step.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepStats {
    pub krylov_iters: usize,
    pub krylov_rel_residual: f64,
    /// Accepted Armijo step (SSNPT only).
    pub eta: Option<f64>,
    pub backtracks: usize,
}

/// Summary of one inner solve.
#[derive(Clone, Debug, Default)]
pub struct InnerStats {
    pub newton_steps: usize,
    pub krylov_iters: usize,
    /// Inner residual before the first step followed by one entry per step.
    pub residuals: Vec<f64>,
    pub steps: Vec<StepStats>,
    /// PDP/PDD steps replaced by globalized SSNPT steps after a stall.
    pub fallback_steps: usize,
}

impl InnerStats {
    pub fn avg_krylov(&self) -> f64 {
        if self.newton_steps == 0 {
            0.0
        } else {
            self.krylov_iters as f64 / self.newton_steps as f64
        }
    }
}

/// `Phi_k(u) = D(u) + alpha |S(y)|_1 + sigma/2 |y - S(y)|^2 - |lambda|^2 / (2 sigma)`
/// with `y = lambda / sigma + grad u` and `S` the soft threshold at
/// `alpha / sigma`.
pub fn merit_phi(u: &Image, ctx: &AlmContext<'_>) -> f64 {
    let sigma = ctx.sigma;
    let alpha = ctx.alpha();
    let y = ctx.lambda.lin_comb(1.0 / sigma, &grad(u), 1.0);
    let s = soft_threshold_unchecked(&y, alpha / sigma, ctx.variant());
    let rest = y.sub(&s).norm();
    let lam = ctx.lambda.norm();
    ctx.problem.data_term(u) + alpha * tv_norm(&s, ctx.variant()) + 0.5 * sigma * rest * rest
        - lam * lam / (2.0 * sigma)
}

/// `max(1, |w| / alpha)` per pixel (iso, both channels) or per channel.
pub(crate) fn dual_scaling(w: &VecField, alpha: f64, variant: TvVariant) -> VecField {
    match variant {
        TvVariant::Iso => w.map_pixels(|a, b| {
            let s = f64::max(1.0, a.hypot(b) / alpha);
            (s, s)
        }),
        TvVariant::Aniso => w.map_pixels(|a, b| {
            (
                f64::max(1.0, a.abs() / alpha),
                f64::max(1.0, b.abs() / alpha),
            )
        }),
    }
}

/// Channel-wise product `a .* b`.
pub(crate) fn hadamard(a: &VecField, b: &VecField) -> VecField {
    let c1 = a
        .chan1()
        .iter()
        .zip(b.chan1())
        .map(|(x, y)| x * y)
        .collect();
    let c2 = a
        .chan2()
        .iter()
        .zip(b.chan2())
        .map(|(x, y)| x * y)
        .collect();
    VecField::from_raw(a.shape(), c1, c2)
}

/// Channel-wise quotient `a ./ b`.
pub(crate) fn quotient(a: &VecField, b: &VecField) -> VecField {
    let c1 = a
        .chan1()
        .iter()
        .zip(b.chan1())
        .map(|(x, y)| x / y)
        .collect();
    let c2 = a
        .chan2()
        .iter()
        .zip(b.chan2())
        .map(|(x, y)| x / y)
        .collect();
    VecField::from_raw(a.shape(), c1, c2)
}

/// Second block of the primal-dual system,
/// `-sigma grad u - lambda + max(1, |lambda + sigma grad u| / alpha) h`.
pub fn pd_system_residual(u: &Image, h: &VecField, ctx: &AlmContext<'_>) -> VecField {
    let w = ctx.shifted(u);
    let scale = dual_scaling(&w, ctx.alpha(), ctx.variant());
    hadamard(&scale, h).sub(&w)
}

/// Frobenius norm of [`pd_system_residual`], the PDP/PDD stopping quantity.
pub fn residual_pd(u: &Image, h: &VecField, ctx: &AlmContext<'_>) -> f64 {
    pd_system_residual(u, h, ctx).norm()
}

/// First block of the primal-dual system, `H u - f - div h`.
pub fn pd_first_block(u: &Image, h: &VecField, ctx: &AlmContext<'_>) -> Image {
    ctx.problem.h().apply(u).sub(ctx.problem.f()).sub(&div(h))
}

/// Norm of the first block stacked with the second block divided by
/// `U = max(1, |lambda + sigma grad u| / alpha)`. The scaled second block is
/// `h - P_alpha(lambda + sigma grad u)`, so this bounds `|F(u)|` from
/// [`pt_gradient`] up to a factor 3 and does not grow with `sigma`.
pub fn residual_pd_stacked(u: &Image, h: &VecField, ctx: &AlmContext<'_>) -> f64 {
    let w = ctx.shifted(u);
    let scale = dual_scaling(&w, ctx.alpha(), ctx.variant());
    let second = h.sub(&quotient(&w, &scale)).norm();
    pd_first_block(u, h, ctx).norm().hypot(second)
}

/// `F(u) = H u - f + grad^* lambda + sigma grad^* grad u
///         - sigma grad^* S_{alpha/sigma}(lambda / sigma + grad u)`.
pub fn pt_gradient(u: &Image, ctx: &AlmContext<'_>) -> Image {
    let sigma = ctx.sigma;
    let g = grad(u);
    let y = ctx.lambda.lin_comb(1.0 / sigma, &g, 1.0);
    let s = soft_threshold_unchecked(&y, ctx.alpha() / sigma, ctx.variant());
    // grad^*(lambda + sigma grad u - sigma S) = -div(...)
    let v = ctx
        .lambda
        .lin_comb(1.0, &g, sigma)
        .lin_comb(1.0, &s, -sigma);
    ctx.problem
        .h()
        .apply(u)
        .sub(ctx.problem.f())
        .lin_comb(1.0, &div(&v), -1.0)
}

/// Frobenius norm of [`pt_gradient`], the SSNPT stopping quantity; it is
/// also `dist(0, grad Phi_k(u))`.
pub fn residual_pt(u: &Image, ctx: &AlmContext<'_>) -> f64 {
    pt_gradient(u, ctx).norm()
}

/// Restores feasibility of `h` after a Newton update.
pub(crate) fn project_feasible(h: &VecField, alpha: f64, variant: TvVariant) -> VecField {
    project_ball_unchecked(h, alpha, variant)
}

/// Runs Newton steps of `method` from `state` until the inner residual is
/// at most `cfg.threshold`.
/// A Newton step that does not shrink the residual by this factor tightens
/// every later Krylov tolerance a hundredfold.
const STALL_RATIO: f64 = 0.9;

/// PDP/PDD iterations without a new best residual before the remaining
/// steps switch to line-searched SSNPT steps.
const CYCLE_WINDOW: usize = 8;

/// One SSNPT step followed by `h = P_alpha(lambda + sigma grad u)`, which zeroes
/// the second PD block so the stacked residual equals `|F(u)|`.
fn pt_fallback_step(
    state: &NewtonState,
    ctx: &AlmContext<'_>,
    cfg: &InnerConfig,
    tol: f64,
) -> Result<(NewtonState, StepStats)> {
    let (mut next, step) = ssnpt_step(state, ctx, cfg, tol)?;
    next.h = project_ball_unchecked(&ctx.shifted(&next.u), ctx.alpha(), ctx.variant());
    next.inner_residual = residual_pd_stacked(&next.u, &next.h, ctx);
    Ok((next, step))
}

pub fn solve_inner(
    method: InnerMethod,
    state: NewtonState,
    ctx: &AlmContext<'_>,
    cfg: &InnerConfig,
) -> Result<(NewtonState, InnerStats)> {
    let mut state = state;
    state.iteration = 0;
    state.inner_residual = match method {
        InnerMethod::Pdp | InnerMethod::Pdd => residual_pd_stacked(&state.u, &state.h, ctx),
        InnerMethod::Pt => residual_pt(&state.u, ctx),
    };
    let res0 = state.inner_residual;
    let mut tighten = 1.0;
    let (mut best, mut since_best) = (res0, 0);
    let mut stats = InnerStats {
        residuals: vec![res0],
        ..InnerStats::default()
    };
    while state.inner_residual > cfg.threshold {
        if stats.newton_steps >= cfg.max_newton {
            return Err(Error::InnerLimit {
                solver: method.name(),
                outer: cfg.outer,
                max_iters: cfg.max_newton,
                residual: state.inner_residual,
                threshold: cfg.threshold,
            });
        }
        let fallback =
            method != InnerMethod::Pt && (stats.fallback_steps > 0 || since_best >= CYCLE_WINDOW);
        if fallback && stats.fallback_steps == 0 {
            tighten = 1.0;
        }
        let tol = cfg.fixed_krylov_tol.unwrap_or_else(|| {
            let forcing = crate::krylov::newton_forcing_tol(state.inner_residual, res0);
            (forcing * tighten).max(crate::krylov::TOL_FLOOR)
        });
        let (next, step) = match method {
            _ if fallback => pt_fallback_step(&state, ctx, cfg, tol)?,
            InnerMethod::Pdp => ssnpdp_step(&state, ctx, cfg, tol)?,
            InnerMethod::Pdd => ssnpdd_step(&state, ctx, cfg, tol)?,
            InnerMethod::Pt => ssnpt_step(&state, ctx, cfg, tol)?,
        };
        if next.inner_residual > STALL_RATIO * state.inner_residual {
            tighten *= 0.01;
        }
        // marginal decreases count as stagnation
        if next.inner_residual < STALL_RATIO * best {
            (best, since_best) = (next.inner_residual, 0);
        } else {
            since_best += 1;
        }
        stats.fallback_steps += usize::from(fallback);
        state = next;
        stats.newton_steps += 1;
        stats.krylov_iters += step.krylov_iters;
        stats.residuals.push(state.inner_residual);
        stats.steps.push(step);
    }
    Ok((state, stats))
}
