//! Primal Newton step on the gradient of the Moreau-smoothed subproblem,
//! globalised by an Armijo backtracking search on [`merit_phi`].

use super::jacobian::{NewtonOperator, PixelMatrixField};
use super::{merit_phi, pt_gradient, AlmContext, InnerConfig, NewtonState, StepStats};
use crate::error::{Error, Result};
use crate::grid::{dot, grad, Image};
use crate::krylov::{solve, KrylovMethod};
use crate::prox::TvVariant;

/// Relative rounding allowance in the sufficient-decrease test.
const PHI_ROUNDING: f64 = 1e-14;

/// Generalised Jacobian of `F(u)`: `H - div(J grad .)` with
/// `J = alpha (I - y y^T / |y|^2) / |y|` on active pixels and `sigma I`
/// elsewhere (iso), or `diag(sigma (1 - chi_i))` (aniso).
pub fn pt_newton_operator<'a>(u: &Image, ctx: &AlmContext<'a>) -> NewtonOperator<'a> {
    let (alpha, sigma) = (ctx.alpha(), ctx.sigma);
    let t = alpha / sigma;
    let y = ctx.lambda.lin_comb(1.0 / sigma, &grad(u), 1.0);
    let (y1, y2) = (y.chan1(), y.chan2());
    let jac = match ctx.variant() {
        TvVariant::Iso => PixelMatrixField::from_fn(y.shape(), |k| {
            let m = y1[k].hypot(y2[k]);
            if m >= t {
                let (a, b) = (y1[k] / m, y2[k] / m);
                let s = alpha / m;
                [
                    [s * (1.0 - a * a), -s * a * b],
                    [-s * a * b, s * (1.0 - b * b)],
                ]
            } else {
                [[sigma, 0.0], [0.0, sigma]]
            }
        }),
        TvVariant::Aniso => PixelMatrixField::from_fn(y.shape(), |k| {
            let d = |v: f64| if v.abs() >= t { 0.0 } else { sigma };
            [[d(y1[k]), 0.0], [0.0, d(y2[k])]]
        }),
    };
    NewtonOperator::new(ctx.problem.h(), jac)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchOutcome {
    pub eta: f64,
    pub backtracks: usize,
    pub phi_before: f64,
    pub phi_after: f64,
    /// `<F(u), du>`, negative for a descent direction.
    pub slope: f64,
}

/// Backtracks `eta = theta^j` until
/// `Phi(u + eta du) <= Phi(u) + mu_ls * eta * <F(u), du>`.
pub fn armijo(
    u: &Image,
    du: &Image,
    gradient: &Image,
    ctx: &AlmContext<'_>,
    cfg: &InnerConfig,
    iteration: usize,
) -> Result<(Image, LineSearchOutcome)> {
    let ls = cfg.line_search;
    let phi0 = merit_phi(u, ctx);
    let slope = dot(gradient.values(), du.values());
    let mut eta = ls.eta0;
    let mut backtracks = 0;
    loop {
        let trial = u.lin_comb(1.0, du, eta);
        let phi = merit_phi(&trial, ctx);
        let allowance = PHI_ROUNDING * phi0.abs().max(1.0);
        if phi <= phi0 + ls.mu_ls * eta * slope + allowance {
            return Ok((
                trial,
                LineSearchOutcome {
                    eta,
                    backtracks,
                    phi_before: phi0,
                    phi_after: phi,
                    slope,
                },
            ));
        }
        if backtracks >= ls.max_backtracks || eta * ls.theta < 1e-12 {
            return Err(Error::LineSearch {
                outer: cfg.outer,
                iteration,
                phi_current: phi0,
                phi_trial: phi,
                eta,
            });
        }
        eta *= ls.theta;
        backtracks += 1;
    }
}

/// One SSNPT step: CG on the generalised Newton system followed by the
/// Armijo search.
pub fn ssnpt_step(
    state: &NewtonState,
    ctx: &AlmContext<'_>,
    cfg: &InnerConfig,
    krylov_tol: f64,
) -> Result<(NewtonState, StepStats)> {
    let iteration = state.iteration + 1;
    let gradient = pt_gradient(&state.u, ctx);
    let op = pt_newton_operator(&state.u, ctx);
    let sol = solve(
        &op,
        &gradient.scaled(-1.0),
        &cfg.krylov(KrylovMethod::Cg, krylov_tol),
    )
    .map_err(|source| Error::NewtonLinearSolve {
        solver: "SSNPT",
        outer: cfg.outer,
        iteration,
        source,
    })?;
    let (u, outcome) = armijo(&state.u, &sol.x, &gradient, ctx, cfg, iteration)?;
    let inner_residual = pt_gradient(&u, ctx).norm();
    Ok((
        NewtonState {
            u,
            h: state.h.clone(),
            inner_residual,
            iteration,
        },
        StepStats {
            krylov_iters: sol.iterations,
            krylov_rel_residual: sol.rel_residual,
            eta: Some(outcome.eta),
            backtracks: outcome.backtracks,
        },
    ))
}
