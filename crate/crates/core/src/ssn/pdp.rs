//! Primal-dual Newton step reduced to the primal unknown.

use super::jacobian::{NewtonOperator, PixelMatrixField};
use super::{
    dual_scaling, hadamard, pd_first_block, project_feasible, quotient, residual_pd_stacked,
    AlmContext, InnerConfig, NewtonState, StepStats,
};
use crate::error::{Error, Result};
use crate::grid::{div, grad, Image, VecField};
use crate::krylov::{solve, KrylovMethod};
use crate::prox::TvVariant;

/// Linearisation of the second block `-sigma grad u - lambda + U(u) h` at
/// the current iterate: `C dgrad + U dh = -F2`.
pub(crate) struct PdLinearization {
    /// `U = max(1, |lambda + sigma grad u| / alpha)`, stored per channel.
    pub scale: VecField,
    /// Derivative of the second block with respect to `grad u`.
    pub c: PixelMatrixField,
    /// First block `H u - f - div h`.
    pub f1: Image,
    /// Second block.
    pub f2: VecField,
}

impl PdLinearization {
    pub fn new(state: &NewtonState, ctx: &AlmContext<'_>) -> Self {
        let (alpha, sigma) = (ctx.alpha(), ctx.sigma);
        let w = ctx.shifted(&state.u);
        let scale = dual_scaling(&w, alpha, ctx.variant());
        let (w1, w2) = (w.chan1(), w.chan2());
        let (h1, h2) = (state.h.chan1(), state.h.chan2());
        let c = match ctx.variant() {
            TvVariant::Iso => PixelMatrixField::from_fn(w.shape(), |k| {
                let m = w1[k].hypot(w2[k]);
                let s = if m >= alpha { sigma / (alpha * m) } else { 0.0 };
                [
                    [-sigma + s * h1[k] * w1[k], s * h1[k] * w2[k]],
                    [s * h2[k] * w1[k], -sigma + s * h2[k] * w2[k]],
                ]
            }),
            TvVariant::Aniso => PixelMatrixField::from_fn(w.shape(), |k| {
                let d = |wi: f64, hi: f64| {
                    if wi.abs() >= alpha {
                        -sigma + sigma / alpha * wi.signum() * hi
                    } else {
                        -sigma
                    }
                };
                [[d(w1[k], h1[k]), 0.0], [0.0, d(w2[k], h2[k])]]
            }),
        };
        let f1 = pd_first_block(&state.u, &state.h, ctx);
        let f2 = hadamard(&scale, &state.h).sub(&w);
        Self { scale, c, f1, f2 }
    }

    /// `dh = (-F2 - C grad du) / U`.
    pub fn dual_update(&self, du: &Image) -> VecField {
        let num = self.f2.scaled(-1.0).sub(&self.c.apply(&grad(du)));
        quotient(&num, &self.scale)
    }
}

/// Schur complement `S v = H v - div(J grad v)` with `J = -C / U`.
pub fn pdp_schur_operator<'a>(state: &NewtonState, ctx: &AlmContext<'a>) -> NewtonOperator<'a> {
    let lin = PdLinearization::new(state, ctx);
    schur_from(&lin, ctx)
}

fn schur_from<'a>(lin: &PdLinearization, ctx: &AlmContext<'a>) -> NewtonOperator<'a> {
    let (s1, s2) = (lin.scale.chan1(), lin.scale.chan2());
    let jac = PixelMatrixField::from_fn(lin.c.shape(), |k| {
        let m = lin.c.at(k);
        [
            [-m[0][0] / s1[k], -m[0][1] / s1[k]],
            [-m[1][0] / s2[k], -m[1][1] / s2[k]],
        ]
    });
    NewtonOperator::new(ctx.problem.h(), jac)
}

/// One SSNPDP step: BiCGSTAB on the Schur system for the primal
/// correction, recovery of `h`, projection of `h` onto the feasible set.
pub fn ssnpdp_step(
    state: &NewtonState,
    ctx: &AlmContext<'_>,
    cfg: &InnerConfig,
    krylov_tol: f64,
) -> Result<(NewtonState, StepStats)> {
    let lin = PdLinearization::new(state, ctx);
    let schur = schur_from(&lin, ctx);
    let rhs = lin
        .f1
        .scaled(-1.0)
        .sub(&div(&quotient(&lin.f2, &lin.scale)));
    let sol = solve(
        &schur,
        &rhs,
        &cfg.krylov(KrylovMethod::Bicgstab, krylov_tol),
    )
    .map_err(|source| Error::NewtonLinearSolve {
        solver: "SSNPDP",
        outer: cfg.outer,
        iteration: state.iteration + 1,
        source,
    })?;
    let u = state.u.add(&sol.x);
    let h_raw = state.h.add(&lin.dual_update(&sol.x));
    let inner_residual = residual_pd_stacked(&u, &h_raw, ctx);
    let h = project_feasible(&h_raw, ctx.alpha(), ctx.variant());
    let next = NewtonState {
        u,
        h,
        inner_residual,
        iteration: state.iteration + 1,
    };
    Ok((
        next,
        StepStats {
            krylov_iters: sol.iterations,
            krylov_rel_residual: sol.rel_residual,
            ..StepStats::default()
        },
    ))
}
