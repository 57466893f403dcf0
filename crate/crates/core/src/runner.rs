//! Uniform dispatch over the ALM variants and the ALG2 baseline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alg2::{alg2_run, Alg2Config};
use crate::alm::{alm_run, AlmConfig};
use crate::error::{Error, Result};
use crate::grid::Image;
use crate::linops::DataOperator;
use crate::metrics::MetricRecord;
use crate::prox::TvVariant;
use crate::ssn::InnerMethod;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Pdp,
    Pdd,
    Pt,
    Alg2,
}

impl Solver {
    pub const ALL: [Solver; 4] = [Solver::Pdp, Solver::Pdd, Solver::Pt, Solver::Alg2];

    /// Table label, e.g. `ALM-PDP`.
    pub fn label(&self) -> &'static str {
        match self {
            Solver::Pdp => "ALM-PDP",
            Solver::Pdd => "ALM-PDD",
            Solver::Pt => "ALM-PT",
            Solver::Alg2 => "ALG2",
        }
    }

    pub fn inner(&self) -> Option<InnerMethod> {
        match self {
            Solver::Pdp => Some(InnerMethod::Pdp),
            Solver::Pdd => Some(InnerMethod::Pdd),
            Solver::Pt => Some(InnerMethod::Pt),
            Solver::Alg2 => None,
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Pdp => "pdp",
            Solver::Pdd => "pdd",
            Solver::Pt => "pt",
            Solver::Alg2 => "alg2",
        })
    }
}

impl FromStr for Solver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pdp" => Ok(Solver::Pdp),
            "pdd" => Ok(Solver::Pdd),
            "pt" => Ok(Solver::Pt),
            "alg2" => Ok(Solver::Alg2),
            other => Err(Error::invalid(
                "solver",
                format!("unknown solver `{other}`, expected pdp|pdd|pt|alg2"),
            )),
        }
    }
}

/// Model parameters, stopping tolerance and solver selection. The ALM and
/// ALG2 knobs that are not listed here keep their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub solver: Solver,
    pub alpha: f64,
    pub mu: f64,
    pub variant: TvVariant,
    pub tol: f64,
    pub sigma0: f64,
    pub growth_c: f64,
    pub sigma_max: f64,
    pub delta_inner: f64,
    pub max_outer: usize,
    pub alg2_max_iters: usize,
    pub alg2_check_every: usize,
    pub alg2_gamma: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let alm = AlmConfig::default();
        let alg2 = Alg2Config::default();
        Self {
            solver: Solver::Pdp,
            alpha: alm.alpha,
            mu: alm.mu,
            variant: alm.variant,
            tol: alm.outer_tol,
            sigma0: alm.sigma0,
            growth_c: alm.growth_c,
            sigma_max: alm.sigma_max,
            delta_inner: alm.delta_inner,
            max_outer: alm.max_outer,
            alg2_max_iters: alg2.max_iters,
            alg2_check_every: alg2.check_every,
            alg2_gamma: alg2.gamma,
        }
    }
}

impl SolverConfig {
    pub fn alm(&self) -> AlmConfig {
        AlmConfig {
            sigma0: self.sigma0,
            growth_c: self.growth_c,
            sigma_max: self.sigma_max,
            delta_inner: self.delta_inner,
            outer_tol: self.tol,
            max_outer: self.max_outer,
            inner: self.solver.inner().unwrap_or(InnerMethod::Pdp),
            variant: self.variant,
            alpha: self.alpha,
            mu: self.mu,
            ..AlmConfig::default()
        }
    }

    pub fn alg2(&self) -> Alg2Config {
        Alg2Config {
            alpha: self.alpha,
            mu: self.mu,
            variant: self.variant,
            outer_tol: self.tol,
            max_iters: self.alg2_max_iters,
            check_every: self.alg2_check_every,
            gamma: self.alg2_gamma,
            ..Alg2Config::default()
        }
    }
}

/// Restored image and history of any solver.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub u: Image,
    /// Outer ALM iterations, or ALG2 iterations.
    pub iterations: usize,
    pub history: Vec<MetricRecord>,
    pub total_wall_ms: f64,
}

impl RunResult {
    pub fn last(&self) -> Option<&MetricRecord> {
        self.history.last()
    }
}

pub fn run_solver(
    z: &Image,
    k: &DataOperator,
    cfg: &SolverConfig,
    reference: Option<&Image>,
) -> Result<RunResult> {
    match cfg.solver {
        Solver::Alg2 => {
            let out = alg2_run(z, k, &cfg.alg2(), reference)?;
            Ok(RunResult {
                u: out.state.u,
                iterations: out.iterations,
                history: out.history,
                total_wall_ms: out.total_wall_ms,
            })
        }
        _ => {
            let out = alm_run(z, k, &cfg.alm(), reference)?;
            Ok(RunResult {
                u: out.state.u,
                iterations: out.history.len(),
                history: out.history,
                total_wall_ms: out.total_wall_ms,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Solver::ALL {
            assert_eq!(s.to_string().parse::<Solver>().unwrap(), s);
        }
        assert!("admm".parse::<Solver>().is_err());
    }

    #[test]
    fn config_maps_onto_solver_configs() {
        let cfg = SolverConfig {
            solver: Solver::Pt,
            alpha: 0.2,
            tol: 1e-5,
            sigma0: 2.0,
            ..SolverConfig::default()
        };
        let alm = cfg.alm();
        assert_eq!(alm.inner, InnerMethod::Pt);
        assert_eq!((alm.alpha, alm.outer_tol, alm.sigma0), (0.2, 1e-5, 2.0));
        let alg2 = cfg.alg2();
        assert_eq!((alg2.alpha, alg2.outer_tol), (0.2, 1e-5));
    }
}
