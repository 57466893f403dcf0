//! Accelerated first-order primal-dual baseline (ALG2).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{div, grad, Image, VecField};
use crate::krylov::{cg_solve, KrylovConfig};
use crate::linops::{DataOperator, LinearMap, NormalOperator};
use crate::metrics::{evaluate, psnr_capped, MetricRecord, MetricsConfig};
use crate::problem::Problem;
use crate::prox::{project_ball_unchecked, TvVariant};

/// Squared operator-norm bound of the discrete gradient.
pub const GRAD_NORM_SQ: f64 = 8.0;

/// Acceleration modulus for high-accuracy denoising runs. With the exact
/// modulus 1 the primal step shrinks like `1/k` and `res_u` stalls.
pub const GAMMA_HIGH_ACCURACY: f64 = 0.35;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alg2Config {
    pub alpha: f64,
    pub mu: f64,
    pub variant: TvVariant,
    /// Target `Err`; zero runs exactly `max_iters` iterations.
    pub outer_tol: f64,
    pub max_iters: usize,
    /// `Err` is evaluated every this many iterations.
    pub check_every: usize,
    pub tau0: f64,
    pub sigma0: f64,
    /// Strong-convexity modulus; `None` picks 1 for `K = I` and `mu` otherwise.
    pub gamma: Option<f64>,
    pub prox_tol: f64,
    pub prox_max_iters: usize,
    pub metrics: MetricsConfig,
}

impl Default for Alg2Config {
    fn default() -> Self {
        let step = 1.0 / GRAD_NORM_SQ.sqrt();
        Self {
            alpha: 0.1,
            mu: 0.0,
            variant: TvVariant::Iso,
            outer_tol: 1e-6,
            max_iters: 100_000,
            check_every: 10,
            tau0: step,
            sigma0: step,
            gamma: None,
            prox_tol: 1e-12,
            prox_max_iters: 5000,
            metrics: MetricsConfig::default(),
        }
    }
}

impl Alg2Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0 && self.sigma0 > 0.0) {
            return Err(Error::invalid("tau0", "step sizes must be positive"));
        }
        if self.tau0 * self.sigma0 * GRAD_NORM_SQ > 1.0 + 1e-12 {
            return Err(Error::invalid(
                "tau0",
                "tau0 * sigma0 * 8 must not exceed 1",
            ));
        }
        if !(self.outer_tol >= 0.0) {
            return Err(Error::invalid("tol", "must be nonnegative"));
        }
        if self.max_iters == 0 || self.check_every == 0 {
            return Err(Error::invalid(
                "max_iters",
                "iteration counts must be positive",
            ));
        }
        if let Some(g) = self.gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::invalid("gamma", "must be nonnegative"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Alg2State {
    pub u: Image,
    pub u_bar: Image,
    pub lambda: VecField,
    pub tau: f64,
    pub sigma: f64,
    pub theta_accel: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug)]
pub struct Alg2Outcome {
    pub state: Alg2State,
    pub iterations: usize,
    pub history: Vec<MetricRecord>,
    pub total_wall_ms: f64,
}

/// `x -> x + tau H x`.
struct ShiftedNormal<'a> {
    h: NormalOperator<'a>,
    tau: f64,
}

impl LinearMap<Image> for ShiftedNormal<'_> {
    fn apply(&self, x: &Image) -> Image {
        x.lin_comb(1.0, &self.h.apply(x), self.tau)
    }
    fn apply_adjoint(&self, x: &Image) -> Image {
        self.apply(x)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
}

/// Solves `(I + tau H) u = a + tau f`.
fn data_prox(problem: &Problem, a: &Image, tau: f64, cfg: &Alg2Config) -> Result<Image> {
    let h = problem.h();
    if h.is_identity() {
        return Ok(a.lin_comb(1.0, problem.f(), tau).scaled(1.0 / (1.0 + tau)));
    }
    // correction d = u - a solves (I + tau H) d = tau (f - H a)
    let rhs = problem.f().sub(&h.apply(a)).scaled(tau);
    let op = ShiftedNormal { h, tau };
    let sol = cg_solve(
        &op,
        &rhs,
        &KrylovConfig::cg(cfg.prox_tol, cfg.prox_max_iters),
    )?;
    Ok(a.add(&sol.x))
}

pub fn alg2_run(
    z: &Image,
    k: &DataOperator,
    cfg: &Alg2Config,
    reference: Option<&Image>,
) -> Result<Alg2Outcome> {
    cfg.validate()?;
    let problem = Problem::new(z.clone(), k.clone(), cfg.mu, cfg.alpha, cfg.variant)?;
    if problem.f().norm() == 0.0 {
        return Err(Error::ZeroData);
    }
    let gamma = cfg.gamma.unwrap_or(if problem.k().is_identity() {
        1.0
    } else {
        cfg.mu
    });
    let s = z.shape();
    let mut st = Alg2State {
        u: z.clone(),
        u_bar: z.clone(),
        lambda: VecField::zeros(s),
        tau: cfg.tau0,
        sigma: cfg.sigma0,
        theta_accel: 1.0,
        gamma,
    };
    let started = Instant::now();
    let mut chunk = Instant::now();
    let mut history = Vec::new();
    let mut last_err = f64::INFINITY;
    for it in 1..=cfg.max_iters {
        let shifted = st.lambda.lin_comb(1.0, &grad(&st.u_bar), st.sigma);
        st.lambda = project_ball_unchecked(&shifted, cfg.alpha, cfg.variant);
        let a = st.u.lin_comb(1.0, &div(&st.lambda), st.tau);
        let u_new = data_prox(&problem, &a, st.tau, cfg)?;
        let theta = 1.0 / (1.0 + 2.0 * gamma * st.tau).sqrt();
        st.tau *= theta;
        st.sigma /= theta;
        st.theta_accel = theta;
        assert!(
            st.tau * st.sigma * GRAD_NORM_SQ <= 1.0 + 1e-12,
            "step-size invariant violated"
        );
        st.u_bar = u_new.lin_comb(1.0 + theta, &st.u, -theta);
        st.u = u_new;

        let check = it % cfg.check_every == 0 || it == cfg.max_iters;
        if check {
            let wall_ms = chunk.elapsed().as_secs_f64() * 1e3;
            let res = evaluate(&problem, &st.u, &st.lambda, &cfg.metrics)?;
            let psnr = reference.map(|r| psnr_capped(&st.u, r)).transpose()?;
            history.push(MetricRecord {
                k: it,
                res_u: res.res_u,
                res_lambda: res.res_lambda,
                err: res.err,
                res1: res.res1,
                res2: res.res2,
                gap: res.gap,
                gap_flag: res.gap_flag,
                psnr,
                wall_ms,
                inner_newton: 0,
                avg_krylov: 0.0,
                sigma: st.sigma,
                b2: None,
            });
            last_err = res.err;
            chunk = Instant::now();
            if cfg.outer_tol > 0.0 && res.err <= cfg.outer_tol {
                return Ok(Alg2Outcome {
                    state: st,
                    iterations: it,
                    history,
                    total_wall_ms: started.elapsed().as_secs_f64() * 1e3,
                });
            }
        }
    }
    if cfg.outer_tol > 0.0 {
        return Err(Error::NotConverged {
            method: "ALG2",
            iterations: cfg.max_iters,
            err: last_err,
            tol: cfg.outer_tol,
        });
    }
    Ok(Alg2Outcome {
        state: st,
        iterations: cfg.max_iters,
        history,
        total_wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}
