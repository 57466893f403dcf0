//! Outer augmented Lagrangian loop.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{grad, Image, VecField};
use crate::linops::DataOperator;
use crate::metrics::{evaluate, psnr_capped, MetricRecord, MetricsConfig};
use crate::problem::Problem;
use crate::prox::{project_ball_unchecked, soft_threshold_unchecked, TvVariant};
use crate::ssn::{
    residual_pt, solve_inner, AlmContext, InnerConfig, InnerMethod, InnerStats, LineSearchParams,
    NewtonState,
};

/// The two inner-tolerance constants offered as presets.
pub const DELTA_PRESETS: [f64; 2] = [1e-2, 1e-4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlmConfig {
    pub sigma0: f64,
    pub growth_c: f64,
    pub sigma_max: f64,
    pub delta_inner: f64,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub inner: InnerMethod,
    pub variant: TvVariant,
    pub alpha: f64,
    pub mu: f64,
    pub max_newton: usize,
    pub krylov_max_iters: usize,
    pub nested_tol: f64,
    pub line_search: LineSearchParams,
    pub metrics: MetricsConfig,
}

impl Default for AlmConfig {
    fn default() -> Self {
        Self {
            sigma0: 4.0,
            growth_c: 4.0,
            sigma_max: 1e6,
            delta_inner: 1e-4,
            outer_tol: 1e-6,
            max_outer: 50,
            inner: InnerMethod::Pdp,
            variant: TvVariant::Iso,
            alpha: 0.1,
            mu: 0.0,
            max_newton: 50,
            krylov_max_iters: 5000,
            nested_tol: 1e-12,
            line_search: LineSearchParams::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl AlmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(
                    name,
                    format!("must be positive and finite, got {v}"),
                ))
            }
        };
        positive("sigma0", self.sigma0)?;
        positive("delta", self.delta_inner)?;
        positive("tol", self.outer_tol)?;
        positive("alpha", self.alpha)?;
        positive("c0", self.metrics.c0)?;
        if !(self.growth_c > 1.0 && self.growth_c.is_finite()) {
            return Err(Error::invalid(
                "growth",
                format!("must exceed 1, got {}", self.growth_c),
            ));
        }
        if !(self.sigma_max >= self.sigma0) {
            return Err(Error::invalid("sigma_max", "must be at least sigma0"));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid(
                "mu",
                format!("must be nonnegative, got {}", self.mu),
            ));
        }
        if self.max_outer == 0 || self.max_newton == 0 || self.krylov_max_iters == 0 {
            return Err(Error::invalid(
                "max_outer",
                "iteration caps must be positive",
            ));
        }
        self.line_search.validate()
    }

    /// `sigma_k = min(sigma0 * c^k, sigma_max)`.
    pub fn sigma_at(&self, k: usize) -> f64 {
        let exp = i32::try_from(k).unwrap_or(i32::MAX);
        (self.sigma0 * self.growth_c.powi(exp)).min(self.sigma_max)
    }

    pub fn inner_config(&self, sigma: f64, outer: usize) -> InnerConfig {
        InnerConfig {
            threshold: self.delta_inner / sigma,
            max_newton: self.max_newton,
            krylov_max_iters: self.krylov_max_iters,
            nested_tol: self.nested_tol,
            fixed_krylov_tol: None,
            line_search: self.line_search,
            outer,
        }
    }
}

/// `inner_res <= delta / sigma_k`.
pub fn inner_stop_rule(inner_res: f64, sigma_k: f64, delta: f64) -> bool {
    inner_res <= delta / sigma_k
}

#[derive(Clone, Debug)]
pub struct OuterState {
    pub u: Image,
    pub p: VecField,
    pub lambda: VecField,
    /// Auxiliary dual iterate carried between PDP/PDD inner solves.
    pub h: VecField,
    /// Penalty of the next outer iteration.
    pub sigma: f64,
    pub k: usize,
}

impl OuterState {
    /// `u = z` and zero dual variables.
    pub fn initial(z: &Image, sigma0: f64) -> Self {
        let s = z.shape();
        Self {
            u: z.clone(),
            p: VecField::zeros(s),
            lambda: VecField::zeros(s),
            h: VecField::zeros(s),
            sigma: sigma0,
            k: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AlmOutcome {
    pub state: OuterState,
    pub history: Vec<MetricRecord>,
    pub inner: Vec<InnerStats>,
    pub total_wall_ms: f64,
}

/// Runs the ALM on `min D(u) + alpha TV(u)` until `Err <= cfg.outer_tol`.
/// `reference`, when given, feeds the PSNR column.
pub fn alm_run(
    z: &Image,
    k: &DataOperator,
    cfg: &AlmConfig,
    reference: Option<&Image>,
) -> Result<AlmOutcome> {
    cfg.validate()?;
    let problem = Problem::new(z.clone(), k.clone(), cfg.mu, cfg.alpha, cfg.variant)?;
    alm_solve(&problem, cfg, reference)
}

pub fn alm_solve(
    problem: &Problem,
    cfg: &AlmConfig,
    reference: Option<&Image>,
) -> Result<AlmOutcome> {
    cfg.validate()?;
    if problem.f().norm() == 0.0 {
        return Err(Error::ZeroData);
    }
    let started = Instant::now();
    let (alpha, variant) = (problem.alpha(), problem.variant());
    let mut state = OuterState::initial(problem.z(), cfg.sigma0);
    let mut history = Vec::new();
    let mut inner_log = Vec::new();
    let mut last_err = f64::INFINITY;
    for k in 0..cfg.max_outer {
        let t0 = Instant::now();
        let sigma = cfg.sigma_at(k);
        let ctx = AlmContext::new(problem, &state.lambda, sigma)?;
        let start = NewtonState::new(state.u.clone(), state.h.clone());
        let (next, stats) = solve_inner(cfg.inner, start, &ctx, &cfg.inner_config(sigma, k))?;

        let g = grad(&next.u);
        let y = state.lambda.lin_comb(1.0 / sigma, &g, 1.0);
        let p = soft_threshold_unchecked(&y, alpha / sigma, variant);
        let lambda = match cfg.inner {
            InnerMethod::Pt => state.lambda.lin_comb(1.0, &g.sub(&p), sigma),
            InnerMethod::Pdp | InnerMethod::Pdd => {
                project_ball_unchecked(&ctx.shifted(&next.u), alpha, variant)
            }
        };
        let dist = residual_pt(&next.u, &ctx);
        let dlambda = lambda.sub(&state.lambda).norm();
        let wall_ms = t0.elapsed().as_secs_f64() * 1e3;

        let res = evaluate(problem, &next.u, &lambda, &cfg.metrics)?;
        let psnr = reference.map(|r| psnr_capped(&next.u, r)).transpose()?;
        history.push(MetricRecord {
            k: k + 1,
            res_u: res.res_u,
            res_lambda: res.res_lambda,
            err: res.err,
            res1: res.res1,
            res2: res.res2,
            gap: res.gap,
            gap_flag: res.gap_flag,
            psnr,
            wall_ms,
            inner_newton: stats.newton_steps,
            avg_krylov: stats.avg_krylov(),
            sigma,
            b2: (dlambda > 0.0).then(|| dist * sigma / dlambda),
        });
        inner_log.push(stats);
        state = OuterState {
            u: next.u,
            p,
            lambda,
            h: next.h,
            sigma: cfg.sigma_at(k + 1),
            k: k + 1,
        };
        last_err = res.err;
        if res.err <= cfg.outer_tol {
            return Ok(AlmOutcome {
                state,
                history,
                inner: inner_log,
                total_wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
        }
    }
    Err(Error::NotConverged {
        method: cfg.inner.name(),
        iterations: cfg.max_outer,
        err: last_err,
        tol: cfg.outer_tol,
    })
}

/// Retrospective view of the inexactness criteria. Only the ratio
/// `dist(0, dPhi_k) sigma_k / |lambda^{k+1} - lambda^k|` is computable; the
/// other two need `inf Phi_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub b2: Vec<Option<f64>>,
    pub a_available: bool,
    pub b1_available: bool,
}

pub fn criteria_abc_report(history: &[MetricRecord]) -> CriteriaReport {
    CriteriaReport {
        b2: history.iter().map(|r| r.b2).collect(),
        a_available: false,
        b1_available: false,
    }
}
