//! Primal-dual Newton step reduced to the dual unknown.

use std::cell::{Cell, RefCell};

use super::jacobian::PixelMatrixField;
use super::pdp::PdLinearization;
use super::{
    hadamard, project_feasible, residual_pd_stacked, AlmContext, InnerConfig, NewtonState,
    StepStats,
};
use crate::error::{Error, Result};
use crate::grid::{div, grad, Image, VecField};
use crate::krylov::{solve, KrylovConfig, KrylovError, KrylovMethod};
use crate::linops::LinearMap;
use crate::problem::Problem;

/// `T g = U .* g + C grad H^{-1} div g`. Every application runs a nested
/// CG solve with `H`; the first nested failure is kept and reported by
/// [`PddOperator::take_failure`].
pub struct PddOperator<'a> {
    problem: &'a Problem,
    scale: VecField,
    c: PixelMatrixField,
    nested: KrylovConfig,
    failure: RefCell<Option<KrylovError>>,
    nested_iters: Cell<usize>,
}

impl<'a> PddOperator<'a> {
    pub(crate) fn new(
        problem: &'a Problem,
        scale: VecField,
        c: PixelMatrixField,
        nested: KrylovConfig,
    ) -> Self {
        Self {
            problem,
            scale,
            c,
            nested,
            failure: RefCell::new(None),
            nested_iters: Cell::new(0),
        }
    }

    /// `H^{-1} b`, recording failures instead of propagating them.
    pub fn h_inverse(&self, b: &Image) -> Image {
        match self.problem.h_solve(b, &self.nested) {
            Ok(sol) => {
                self.nested_iters
                    .set(self.nested_iters.get() + sol.iterations);
                sol.x
            }
            Err(e) => {
                let mut slot = self.failure.borrow_mut();
                if slot.is_none() {
                    *slot = Some(e);
                }
                Image::zeros(b.shape())
            }
        }
    }

    pub fn take_failure(&self) -> Option<KrylovError> {
        self.failure.borrow_mut().take()
    }

    pub fn nested_iterations(&self) -> usize {
        self.nested_iters.get()
    }
}

impl LinearMap<VecField> for PddOperator<'_> {
    fn apply(&self, g: &VecField) -> VecField {
        let v = self.h_inverse(&div(g));
        hadamard(&self.scale, g).add(&self.c.apply(&grad(&v)))
    }

    fn apply_adjoint(&self, g: &VecField) -> VecField {
        let v = self.h_inverse(&div(&self.c.apply_transpose(g)));
        hadamard(&self.scale, g).add(&grad(&v))
    }
}

/// One SSNPDD step: BiCGSTAB on the dual system for the correction of `h`,
/// `u = H^{-1}(f + div h)`, projection of `h`.
pub fn ssnpdd_step(
    state: &NewtonState,
    ctx: &AlmContext<'_>,
    cfg: &InnerConfig,
    krylov_tol: f64,
) -> Result<(NewtonState, StepStats)> {
    let iteration = state.iteration + 1;
    let nested_err = |source| Error::NestedSolve {
        solver: "SSNPDD",
        outer: cfg.outer,
        iteration,
        source,
    };
    let lin = PdLinearization::new(state, ctx);
    let op = PddOperator::new(
        ctx.problem,
        lin.scale.clone(),
        lin.c.clone(),
        cfg.nested_krylov(),
    );
    // -F2 + C grad H^{-1} F1
    let w = op.h_inverse(&lin.f1);
    let rhs = lin.f2.scaled(-1.0).add(&lin.c.apply(&grad(&w)));
    if let Some(e) = op.take_failure() {
        return Err(nested_err(e));
    }
    let sol = solve(&op, &rhs, &cfg.krylov(KrylovMethod::Bicgstab, krylov_tol));
    if let Some(e) = op.take_failure() {
        return Err(nested_err(e));
    }
    let sol = sol.map_err(|source| Error::NewtonLinearSolve {
        solver: "SSNPDD",
        outer: cfg.outer,
        iteration,
        source,
    })?;
    let h_raw = state.h.add(&sol.x);
    let u = ctx
        .problem
        .h_solve(&ctx.problem.f().add(&div(&h_raw)), &cfg.nested_krylov())
        .map_err(nested_err)?
        .x;
    let inner_residual = residual_pd_stacked(&u, &h_raw, ctx);
    let h = project_feasible(&h_raw, ctx.alpha(), ctx.variant());
    Ok((
        NewtonState {
            u,
            h,
            inner_residual,
            iteration,
        },
        StepStats {
            krylov_iters: sol.iterations,
            krylov_rel_residual: sol.rel_residual,
            ..StepStats::default()
        },
    ))
}
