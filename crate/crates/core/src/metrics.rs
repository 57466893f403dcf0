//! Residuals, primal-dual gap and PSNR.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{div, dot, grad, tv_norm, Image, VecField};
use crate::krylov::KrylovConfig;
use crate::linops::LinearMap;
use crate::problem::Problem;
use crate::prox::{is_feasible, project_ball_unchecked, TvVariant};

/// Relative slack under which a dual field still counts as feasible.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// Display cap for PSNR of identical images.
pub const PSNR_CAP: f64 = 99.0;

/// Why a gap value is missing or infinite.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapFlag {
    #[default]
    Ok,
    /// `lambda` violates the dual constraint, the gap is `+inf`.
    Infeasible,
    /// The `H^{-1}` solve needed by the deblurring gap did not converge.
    Unsolved,
}

impl GapFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            GapFlag::Ok => "",
            GapFlag::Infeasible => "infeasible",
            GapFlag::Unsolved => "unsolved",
        }
    }
}

/// One row of the per-iteration history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub k: usize,
    pub res_u: f64,
    pub res_lambda: f64,
    pub err: f64,
    pub res1: f64,
    pub res2: f64,
    /// `None` unless the gap is finite and was computed.
    pub gap: Option<f64>,
    pub gap_flag: GapFlag,
    pub psnr: Option<f64>,
    pub wall_ms: f64,
    pub inner_newton: usize,
    pub avg_krylov: f64,
    pub sigma: f64,
    /// `dist(0, dPhi_k(u^{k+1})) * sigma_k / |lambda^{k+1} - lambda^k|`.
    pub b2: Option<f64>,
}

/// Knobs of the metric evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Constant inside `res_lambda`.
    pub c0: f64,
    pub gap_tol: f64,
    pub gap_max_iters: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            c0: 1.0,
            gap_tol: 1e-12,
            gap_max_iters: 5000,
        }
    }
}

/// The residual suite at one `(u, lambda)` pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residuals {
    pub res_u: f64,
    pub res_lambda: f64,
    pub err: f64,
    pub res1: f64,
    pub res2: f64,
    pub gap: Option<f64>,
    pub gap_flag: GapFlag,
}

/// `|H u - f - div lambda|`, zero at a saddle point.
pub fn res_u(u: &Image, lambda: &VecField, f: &Image, h: &dyn LinearMap<Image>) -> f64 {
    h.apply(u).sub(f).sub(&div(lambda)).norm()
}

/// `|lambda - P_alpha(lambda + c0 grad u)|`.
pub fn res_lambda(u: &Image, lambda: &VecField, alpha: f64, c0: f64, variant: TvVariant) -> f64 {
    let shifted = lambda.lin_comb(1.0, &grad(u), c0);
    lambda
        .sub(&project_ball_unchecked(&shifted, alpha, variant))
        .norm()
}

/// `(res_u + res_lambda) / |f|`.
pub fn err_total(res_u: f64, res_lambda: f64, f: &Image) -> Result<f64> {
    let fnorm = f.norm();
    if fnorm == 0.0 {
        return Err(Error::ZeroData);
    }
    Ok((res_u + res_lambda) / fnorm)
}

/// Pixel-wise `alpha |grad u| - <lambda, grad u>` in Frobenius norm, with
/// `|.|` the TV pixel norm. The indicator of the dual constraint is left
/// out; callers flag infeasible `lambda` separately.
pub fn res1(u: &Image, lambda: &VecField, alpha: f64, variant: TvVariant) -> f64 {
    let g = grad(u);
    let mut acc = 0.0;
    for k in 0..g.shape().len() {
        let (g1, g2) = (g.chan1()[k], g.chan2()[k]);
        let (l1, l2) = (lambda.chan1()[k], lambda.chan2()[k]);
        let mag = match variant {
            TvVariant::Iso => g1.hypot(g2),
            TvVariant::Aniso => g1.abs() + g2.abs(),
        };
        let t = alpha * mag - (l1 * g1 + l2 * g2);
        acc += t * t;
    }
    acc.sqrt()
}

/// `|alpha grad u - |grad u| lambda|`; the anisotropic form works per
/// channel with `|d_i u|`.
pub fn res2(u: &Image, lambda: &VecField, alpha: f64, variant: TvVariant) -> f64 {
    let g = grad(u);
    let mut acc = 0.0;
    for k in 0..g.shape().len() {
        let (g1, g2) = (g.chan1()[k], g.chan2()[k]);
        let (l1, l2) = (lambda.chan1()[k], lambda.chan2()[k]);
        let (m1, m2) = match variant {
            TvVariant::Iso => {
                let m = g1.hypot(g2);
                (m, m)
            }
            TvVariant::Aniso => (g1.abs(), g2.abs()),
        };
        acc += (alpha * g1 - m1 * l1).powi(2) + (alpha * g2 - m2 * l2).powi(2);
    }
    acc.sqrt()
}

/// Normalised ROF gap
/// `[0.5|u - f|^2 + alpha TV(u) + 0.5|div lambda + f|^2 - 0.5|f|^2] / (N M)`,
/// `+inf` when `lambda` is infeasible.
pub fn pd_gap(u: &Image, lambda: &VecField, f: &Image, alpha: f64, variant: TvVariant) -> f64 {
    if !is_feasible(lambda, alpha, variant, FEASIBILITY_SLACK) {
        return f64::INFINITY;
    }
    let fit = u.sub(f).norm();
    let dual = div(lambda).add(f).norm();
    let fnorm = f.norm();
    let g = 0.5 * fit * fit + alpha * tv_norm(&grad(u), variant) + 0.5 * dual * dual
        - 0.5 * fnorm * fnorm;
    g / u.shape().len() as f64
}

/// Normalised gap for the general problem,
/// `[D(u) + alpha TV(u) + 0.5 <g, H^{-1} g> - 0.5 |z|^2] / (N M)` with
/// `g = f + div lambda`. Reduces to [`pd_gap`] when `H = I`.
pub fn pd_gap_general(
    problem: &Problem,
    u: &Image,
    lambda: &VecField,
    cfg: &MetricsConfig,
) -> (Option<f64>, GapFlag) {
    let (alpha, variant) = (problem.alpha(), problem.variant());
    if !is_feasible(lambda, alpha, variant, FEASIBILITY_SLACK) {
        return (None, GapFlag::Infeasible);
    }
    if problem.h().is_identity() {
        return (
            Some(pd_gap(u, lambda, problem.f(), alpha, variant)),
            GapFlag::Ok,
        );
    }
    let g = problem.f().add(&div(lambda));
    let krylov = KrylovConfig::cg(cfg.gap_tol, cfg.gap_max_iters);
    let hinv = match problem.h_solve(&g, &krylov) {
        Ok(sol) => sol.x,
        Err(_) => return (None, GapFlag::Unsolved),
    };
    let z = problem.z().norm();
    let value = problem.data_term(u)
        + alpha * tv_norm(&grad(u), variant)
        + 0.5 * dot(g.values(), hinv.values())
        - 0.5 * z * z;
    (Some(value / u.shape().len() as f64), GapFlag::Ok)
}

/// `10 log10(1 / MSE)` on the `[0, 1]` scale; `+inf` for identical images.
pub fn psnr(u: &Image, reference: &Image) -> Result<f64> {
    if u.shape() != reference.shape() {
        return Err(Error::ShapeMismatch {
            expected: reference.shape(),
            found: u.shape(),
        });
    }
    let d = u.sub(reference).norm();
    let mse = d * d / u.shape().len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    })
}

/// [`psnr`] capped at [`PSNR_CAP`] for reports.
pub fn psnr_capped(u: &Image, reference: &Image) -> Result<f64> {
    Ok(psnr(u, reference)?.min(PSNR_CAP))
}

/// Evaluates the full residual suite.
pub fn evaluate(
    problem: &Problem,
    u: &Image,
    lambda: &VecField,
    cfg: &MetricsConfig,
) -> Result<Residuals> {
    let (alpha, variant) = (problem.alpha(), problem.variant());
    let ru = res_u(u, lambda, problem.f(), &problem.h());
    let rl = res_lambda(u, lambda, alpha, cfg.c0, variant);
    let err = err_total(ru, rl, problem.f())?;
    let (gap, gap_flag) = pd_gap_general(problem, u, lambda, cfg);
    Ok(Residuals {
        res_u: ru,
        res_lambda: rl,
        err,
        res1: res1(u, lambda, alpha, variant),
        res2: res2(u, lambda, alpha, variant),
        gap,
        gap_flag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridShape;
    use crate::linops::{BlurKernel, DataOperator};
    use crate::prox::project_ball;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(s: GridShape, r: &mut ChaCha8Rng) -> Image {
        Image::from_fn(s, |_, _| r.random_range(-1.0..1.0))
    }

    fn random_field(s: GridShape, r: &mut ChaCha8Rng, scale: f64) -> VecField {
        VecField::from_fn(s, |_, _| {
            (r.random_range(-scale..scale), r.random_range(-scale..scale))
        })
    }

    /// Explicit forward differences, written independently of `grid`.
    fn fd(u: &Image, i: usize, j: usize) -> (f64, f64) {
        let s = u.shape();
        let a = if i + 1 < s.rows() {
            u.get(i + 1, j) - u.get(i, j)
        } else {
            0.0
        };
        let b = if j + 1 < s.cols() {
            u.get(i, j + 1) - u.get(i, j)
        } else {
            0.0
        };
        (a, b)
    }

    fn bd(p: &VecField, i: usize, j: usize) -> f64 {
        let s = p.shape();
        let (m, n) = (s.rows(), s.cols());
        let x = if m == 1 {
            0.0
        } else if i == 0 {
            p.get(i, j).0
        } else if i == m - 1 {
            -p.get(i - 1, j).0
        } else {
            p.get(i, j).0 - p.get(i - 1, j).0
        };
        let y = if n == 1 {
            0.0
        } else if j == 0 {
            p.get(i, j).1
        } else if j == n - 1 {
            -p.get(i, j - 1).1
        } else {
            p.get(i, j).1 - p.get(i, j - 1).1
        };
        x + y
    }

    #[test]
    fn res_u_duplicate_formula() {
        let s = GridShape::new(3, 4).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let (u, f) = (random_image(s, &mut r), random_image(s, &mut r));
        let lam = random_field(s, &mut r, 1.0);
        let k = DataOperator::Identity;
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..4 {
                let t = u.get(i, j) - f.get(i, j) - bd(&lam, i, j);
                acc += t * t;
            }
        }
        let got = res_u(&u, &lam, &f, &crate::linops::NormalOperator::new(&k, 0.0));
        assert!((got - acc.sqrt()).abs() < 1e-14);
        let zero = VecField::zeros(s);
        let plain = res_u(&u, &zero, &f, &crate::linops::NormalOperator::new(&k, 0.0));
        assert!((plain - u.sub(&f).norm()).abs() < 1e-15);
    }

    #[test]
    fn res_lambda_cases() {
        let s = GridShape::new(4, 3).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let alpha = 0.3;
        for variant in [TvVariant::Iso, TvVariant::Aniso] {
            let lam = project_ball(&random_field(s, &mut r, 1.0), alpha, variant).unwrap();
            let u = Image::constant(s, 0.4);
            assert!(res_lambda(&u, &lam, alpha, 1.0, variant) < 1e-15);
        }
        // Duplicate-formula oracle, iso, c0 = 2.
        let u = random_image(s, &mut r);
        let lam = random_field(s, &mut r, 0.5);
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..3 {
                let (g1, g2) = fd(&u, i, j);
                let (l1, l2) = lam.get(i, j);
                let (w1, w2) = (l1 + 2.0 * g1, l2 + 2.0 * g2);
                let scale = f64::max(1.0, (w1 * w1 + w2 * w2).sqrt() / alpha);
                acc += (l1 - w1 / scale).powi(2) + (l2 - w2 / scale).powi(2);
            }
        }
        assert!((res_lambda(&u, &lam, alpha, 2.0, TvVariant::Iso) - acc.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn err_arithmetic_and_zero_data() {
        let s = GridShape::square(2);
        let f = Image::constant(s, 1.0);
        assert!((err_total(1.0, 1.0, &f).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            err_total(1.0, 0.0, &Image::zeros(s)),
            Err(Error::ZeroData)
        ));
    }

    #[test]
    fn res1_res2_oracles() {
        let s = GridShape::new(3, 3).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let alpha = 0.2;
        let u = random_image(s, &mut r);
        let lam = random_field(s, &mut r, 0.3);
        let (mut a1, mut a2, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let (g1, g2) = fd(&u, i, j);
                let (l1, l2) = lam.get(i, j);
                let m = (g1 * g1 + g2 * g2).sqrt();
                a1 += (alpha * m - l1 * g1 - l2 * g2).powi(2);
                a2 += (alpha * (g1.abs() + g2.abs()) - l1 * g1 - l2 * g2).powi(2);
                b1 += (alpha * g1 - m * l1).powi(2) + (alpha * g2 - m * l2).powi(2);
                b2 += (alpha * g1 - g1.abs() * l1).powi(2) + (alpha * g2 - g2.abs() * l2).powi(2);
            }
        }
        assert!((res1(&u, &lam, alpha, TvVariant::Iso) - a1.sqrt()).abs() < 1e-14);
        assert!((res1(&u, &lam, alpha, TvVariant::Aniso) - a2.sqrt()).abs() < 1e-14);
        assert!((res2(&u, &lam, alpha, TvVariant::Iso) - b1.sqrt()).abs() < 1e-14);
        assert!((res2(&u, &lam, alpha, TvVariant::Aniso) - b2.sqrt()).abs() < 1e-14);

        let zero = VecField::zeros(s);
        let tv: f64 = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| {
                let (g1, g2) = fd(&u, i, j);
                (alpha * (g1 * g1 + g2 * g2).sqrt()).powi(2)
            })
            .sum();
        assert!((res1(&u, &zero, alpha, TvVariant::Iso) - tv.sqrt()).abs() < 1e-14);
        let flat = Image::constant(s, 0.7);
        assert_eq!(res2(&flat, &lam, alpha, TvVariant::Iso), 0.0);
    }

    #[test]
    fn gap_examples() {
        let s = GridShape::new(4, 5).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let alpha = 0.1;
        for variant in [TvVariant::Iso, TvVariant::Aniso] {
            let f = random_image(s, &mut r);
            let zero = VecField::zeros(s);
            let expected = alpha * tv_norm(&grad(&f), variant) / 20.0;
            assert!((pd_gap(&f, &zero, &f, alpha, variant) - expected).abs() < 1e-14);
            for _ in 0..50 {
                let u = random_image(s, &mut r);
                let lam = project_ball(&random_field(s, &mut r, 1.0), alpha, variant).unwrap();
                assert!(pd_gap(&u, &lam, &f, alpha, variant) >= -1e-14);
            }
            let bad = VecField::from_fn(s, |_, _| (2.0 * alpha, 0.0));
            assert_eq!(pd_gap(&f, &bad, &f, alpha, variant), f64::INFINITY);
        }
    }

    #[test]
    fn general_gap_matches_rof_and_is_nonnegative() {
        let s = GridShape::square(5);
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let z = random_image(s, &mut r);
        let p = Problem::denoise(z.clone(), 0.1, TvVariant::Iso).unwrap();
        let u = random_image(s, &mut r);
        let lam = project_ball(&random_field(s, &mut r, 1.0), 0.1, TvVariant::Iso).unwrap();
        let (g, flag) = pd_gap_general(&p, &u, &lam, &MetricsConfig::default());
        assert_eq!(flag, GapFlag::Ok);
        assert!((g.unwrap() - pd_gap(&u, &lam, &z, 0.1, TvVariant::Iso)).abs() < 1e-14);

        let k = DataOperator::blur(BlurKernel::motion(3).unwrap(), s).unwrap();
        let p = Problem::new(z, k, 1e-2, 0.1, TvVariant::Aniso).unwrap();
        for _ in 0..10 {
            let u = random_image(s, &mut r);
            let lam = project_ball(&random_field(s, &mut r, 1.0), 0.1, TvVariant::Aniso).unwrap();
            let (g, flag) = pd_gap_general(&p, &u, &lam, &MetricsConfig::default());
            assert_eq!(flag, GapFlag::Ok);
            assert!(g.unwrap() >= -1e-12);
        }
    }

    #[test]
    fn psnr_examples() {
        let s = GridShape::square(4);
        let a = Image::constant(s, 0.3);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(psnr_capped(&a, &a).unwrap(), 99.0);
        assert!((psnr(&a.map(|v| v + 0.1), &a).unwrap() - 20.0).abs() < 1e-9);
        assert!(
            psnr(&Image::zeros(s), &Image::constant(s, 1.0))
                .unwrap()
                .abs()
                < 1e-12
        );
        assert!(psnr(&a, &Image::zeros(GridShape::square(3))).is_err());
    }

    #[test]
    fn err_scale_consistency() {
        // Scaling (u, lambda, z) and alpha by s > 0 scales every residual by s.
        let s = GridShape::square(6);
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let z = random_image(s, &mut r);
        let u = random_image(s, &mut r);
        let lam = random_field(s, &mut r, 0.2);
        let scale = 3.5;
        let cfg = MetricsConfig::default();
        let p1 = Problem::denoise(z.clone(), 0.1, TvVariant::Iso).unwrap();
        let p2 = Problem::denoise(z.scaled(scale), 0.1 * scale, TvVariant::Iso).unwrap();
        let e1 = evaluate(&p1, &u, &lam, &cfg).unwrap().err;
        let e2 = evaluate(&p2, &u.scaled(scale), &lam.scaled(scale), &cfg)
            .unwrap()
            .err;
        assert!((e1 - e2).abs() < 1e-13 * e1.max(1.0));
    }
}
