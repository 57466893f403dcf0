//! One test per acceptance criterion. Each prints a single
//! `PASS`/`FAIL` line with the measured values and pinned tolerances.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tvalm::alg2::{alg2_run, Alg2Config, GAMMA_HIGH_ACCURACY};
use tvalm::alm::{alm_run, AlmConfig};
use tvalm::degrade::{degrade, phantom, DegradeSpec};
use tvalm::grid::{inner_x, inner_y};
use tvalm::io::load_image;
use tvalm::linops::LinearMap;
use tvalm::metrics::psnr;
use tvalm::prox::{moreau_check, project_ball, soft_threshold};
use tvalm::report::records_csv;
use tvalm::runner::{run_solver, Solver, SolverConfig};
use tvalm::ssn::{pdp_schur_operator, pt_newton_operator, AlmContext, NewtonState};
use tvalm::{div, grad, BlurKernel, DataOperator, GridShape, Image, Problem, TvVariant, VecField};

const VARIANTS: [TvVariant; 2] = [TvVariant::Iso, TvVariant::Aniso];

/// Environment variable naming the 256x256 standard test image (binary PGM).
const STANDARD_IMAGE_ENV: &str = "TVALM_STANDARD_IMAGE";

fn verdict(id: u32, pass: bool, detail: &str, elapsed: Duration, budget: Duration) -> bool {
    let ok = pass && elapsed <= budget;
    println!(
        "{} criterion {id}: {detail} [{:.2}s of {:.0}s]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    ok
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_image(s: GridShape, r: &mut ChaCha8Rng) -> Image {
    Image::from_fn(s, |_, _| r.random_range(-1.0..1.0))
}

fn random_field(s: GridShape, r: &mut ChaCha8Rng, scale: f64) -> VecField {
    VecField::from_fn(s, |_, _| {
        (r.random_range(-scale..scale), r.random_range(-scale..scale))
    })
}

fn denoise_instance(n: usize, noise: f64, seed: u64) -> (Image, Image) {
    let clean = phantom(GridShape::square(n));
    let z = degrade(&clean, &DegradeSpec::noise(noise, seed)).unwrap();
    (clean, z)
}

#[test]
fn criterion_01_adjoint_identity() {
    let t = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for (m, n) in [(1, 1), (2, 2), (3, 5), (16, 16), (64, 64)] {
        let s = GridShape::new(m, n).unwrap();
        for _ in 0..100 {
            let u = random_image(s, &mut r);
            let p = random_field(s, &mut r, 1.0);
            let (g, d) = (grad(&u), div(&p));
            let lhs = inner_y(&g, &p).unwrap();
            let rhs = -inner_x(&u, &d).unwrap();
            let scale = (g.norm() * p.norm())
                .max(u.norm() * d.norm())
                .max(f64::MIN_POSITIVE);
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    let detail = format!("max relative adjoint defect {worst:.2e} (tol 1e-12)");
    assert!(verdict(
        1,
        worst <= 1e-12,
        &detail,
        t.elapsed(),
        Duration::from_secs(1)
    ));
}

/// Minimizer of `0.5 |x - v|^2 + tau |x|` by a two-level grid search.
fn grid_prox(v: (f64, f64), tau: f64, variant: TvVariant) -> (f64, f64) {
    let obj = |x: f64, y: f64| {
        let reg = match variant {
            TvVariant::Iso => x.hypot(y),
            TvVariant::Aniso => x.abs() + y.abs(),
        };
        0.5 * ((x - v.0).powi(2) + (y - v.1).powi(2)) + tau * reg
    };
    let mut best = (0.0, 0.0);
    let mut centre = (0.0, 0.0);
    for (half, step) in [(2.0, 1e-2), (2e-2, 1e-4)] {
        let steps = (2.0 * half / step) as i64;
        let mut best_val = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=steps {
                let x = centre.0 - half + i as f64 * step;
                let y = centre.1 - half + j as f64 * step;
                let f = obj(x, y);
                if f < best_val {
                    best_val = f;
                    best = (x, y);
                }
            }
        }
        centre = best;
    }
    best
}

#[test]
fn criterion_02_prox_and_projection() {
    let t = Instant::now();
    let mut r = rng(2);
    let s = GridShape::new(6, 7).unwrap();
    let mut moreau = 0.0f64;
    for variant in VARIANTS {
        for _ in 0..100 {
            let v = random_field(s, &mut r, 3.0);
            let sigma = r.random_range(0.1..100.0);
            let alpha = r.random_range(0.01..2.0);
            moreau = moreau.max(moreau_check(&v, sigma, alpha, variant).unwrap() / v.norm());
        }
    }
    let mut prox = 0.0f64;
    let one = GridShape::square(1);
    for k in 0..50 {
        let variant = VARIANTS[k % 2];
        let v = (r.random_range(-1.5..1.5), r.random_range(-1.5..1.5));
        let tau = r.random_range(0.05..1.0);
        let field = VecField::from_fn(one, |_, _| v);
        let got = soft_threshold(&field, tau, variant).unwrap().get(0, 0);
        let want = grid_prox(v, tau, variant);
        prox = prox.max((got.0 - want.0).abs()).max((got.1 - want.1).abs());
    }
    let detail = format!(
        "Moreau defect {moreau:.2e} (tol 1e-12), prox vs grid search {prox:.2e} (tol 1e-3)"
    );
    let pass = moreau <= 1e-12 && prox <= 1e-3;
    assert!(verdict(
        2,
        pass,
        &detail,
        t.elapsed(),
        Duration::from_secs(5)
    ));
}

#[test]
fn criterion_03_positive_definiteness() {
    let t = Instant::now();
    let mut r = rng(3);
    let s = GridShape::square(12);
    let blur = DataOperator::blur(BlurKernel::motion(3).unwrap(), s).unwrap();
    let mut worst_pd = f64::INFINITY;
    let mut worst_pt = f64::INFINITY;
    for trial in 0..50 {
        let variant = VARIANTS[trial % 2];
        let alpha = r.random_range(0.02..0.5);
        let sigma = r.random_range(1.0..1e4);
        let z = random_image(s, &mut r);
        let problem = if trial % 3 == 0 {
            Problem::new(z, blur.clone(), 1e-3, alpha, variant).unwrap()
        } else {
            Problem::denoise(z, alpha, variant).unwrap()
        };
        let lambda = project_ball(&random_field(s, &mut r, 2.0 * alpha), alpha, variant).unwrap();
        let ctx = AlmContext::new(&problem, &lambda, sigma).unwrap();
        let u = random_image(s, &mut r).scaled(0.3);
        let h = project_ball(&random_field(s, &mut r, 2.0 * alpha), alpha, variant).unwrap();
        let state = NewtonState::new(u.clone(), h);
        let schur = pdp_schur_operator(&state, &ctx);
        let pt = pt_newton_operator(&u, &ctx);
        let hop = problem.h();
        for _ in 0..3 {
            let v = random_image(s, &mut r);
            let hv = inner_x(&hop.apply(&v), &v).unwrap();
            worst_pd = worst_pd.min(inner_x(&schur.apply(&v), &v).unwrap() - hv);
            worst_pt = worst_pt.min(inner_x(&pt.apply(&v), &v).unwrap() - hv);
        }
    }
    let detail = format!(
        "min <Sv,v> - <Hv,v> = {worst_pd:.2e}, min PT excess = {worst_pt:.2e} (tol -1e-10)"
    );
    let pass = worst_pd >= -1e-10 && worst_pt >= -1e-10;
    assert!(verdict(
        3,
        pass,
        &detail,
        t.elapsed(),
        Duration::from_secs(10)
    ));
}

fn crit4_instances() -> Vec<(usize, TvVariant, Image)> {
    let mut out = Vec::new();
    for n in [3, 8] {
        for variant in VARIANTS {
            out.push((n, variant, denoise_instance(n, 0.1, 40 + n as u64).1));
        }
    }
    out
}

/// Driven one decade past the Err <= 1e-8 requirement: the residual suite is
/// absolute while Err divides by |f|, so criterion 9 needs the margin.
const CRIT4_TOL: f64 = 1e-9;

fn crit4_config(solver: Solver, variant: TvVariant) -> SolverConfig {
    SolverConfig {
        solver,
        variant,
        alpha: 0.1,
        tol: CRIT4_TOL,
        alg2_gamma: Some(GAMMA_HIGH_ACCURACY),
        alg2_max_iters: 1_000_000,
        ..SolverConfig::default()
    }
}

#[test]
fn criterion_04_brute_force_equivalence() {
    let t = Instant::now();
    let mut pairwise = 0.0f64;
    let mut vs_reference = 0.0f64;
    let mut worst_err = 0.0f64;
    let mut failures = Vec::new();
    for (n, variant, z) in crit4_instances() {
        let reference = alg2_run(
            &z,
            &DataOperator::Identity,
            &Alg2Config {
                alpha: 0.1,
                variant,
                outer_tol: 0.0,
                max_iters: 1_000_000,
                check_every: 1_000_000,
                gamma: Some(GAMMA_HIGH_ACCURACY),
                ..Alg2Config::default()
            },
            None,
        )
        .unwrap()
        .state
        .u;
        let mut sols = Vec::new();
        for solver in Solver::ALL {
            match run_solver(
                &z,
                &DataOperator::Identity,
                &crit4_config(solver, variant),
                None,
            ) {
                Ok(run) => {
                    worst_err = worst_err.max(run.last().unwrap().err);
                    sols.push(run.u);
                }
                Err(e) => failures.push(format!("{n}x{n} {variant} {solver}: {e}")),
            }
        }
        for a in &sols {
            vs_reference = vs_reference.max(a.max_abs_diff(&reference));
            for b in &sols {
                pairwise = pairwise.max(a.max_abs_diff(b));
            }
        }
    }
    let detail = format!(
        "pairwise {pairwise:.2e}, vs 1e6-iteration ALG2 {vs_reference:.2e} (tol 1e-5), max Err {worst_err:.2e} (tol 1e-8), failures {failures:?}"
    );
    let pass = failures.is_empty() && pairwise <= 1e-5 && vs_reference <= 1e-5 && worst_err <= 1e-8;
    assert!(verdict(
        4,
        pass,
        &detail,
        t.elapsed(),
        Duration::from_secs(60)
    ));
}

#[test]
fn criterion_05_superlinear_inner_convergence() {
    use tvalm::ssn::{solve_inner, InnerConfig, InnerMethod};
    let t = Instant::now();
    let (_, z) = denoise_instance(16, 0.1, 5);
    let problem = Problem::denoise(z.clone(), 0.1, TvVariant::Aniso).unwrap();
    let lambda = VecField::zeros(z.shape());
    let ctx = AlmContext::new(&problem, &lambda, 64.0).unwrap();
    let start = NewtonState::new(z.clone(), VecField::zeros(z.shape()));
    let (_, stats) = solve_inner(InnerMethod::Pdp, start, &ctx, &InnerConfig::new(1e-12)).unwrap();
    let r = &stats.residuals;
    let ratio = if r.len() >= 2 {
        r[r.len() - 1] / r[r.len() - 2]
    } else {
        f64::INFINITY
    };
    let detail = format!(
        "{} Newton steps, final ratio {ratio:.2e} (tol 0.1)",
        r.len() - 1
    );
    assert!(verdict(
        5,
        ratio <= 0.1,
        &detail,
        t.elapsed(),
        Duration::from_secs(10)
    ));
}

fn crit6_run(inner: Solver) -> tvalm::runner::RunResult {
    let (clean, z) = denoise_instance(64, 0.1, 6);
    let cfg = SolverConfig {
        solver: inner,
        variant: TvVariant::Aniso,
        alpha: 0.1,
        tol: 1e-6,
        sigma0: 4.0,
        growth_c: 4.0,
        delta_inner: 1e-4,
        ..SolverConfig::default()
    };
    run_solver(&z, &DataOperator::Identity, &cfg, Some(&clean)).unwrap()
}

#[test]
fn criterion_06_outer_iteration_economy() {
    let t = Instant::now();
    let pdp = crit6_run(Solver::Pdp);
    let pt = crit6_run(Solver::Pt);
    let detail = format!(
        "ALM-PDP {} outer (max 10), ALM-PT {} outer (max 12), final Err {:.2e} / {:.2e}",
        pdp.iterations,
        pt.iterations,
        pdp.last().unwrap().err,
        pt.last().unwrap().err
    );
    let pass = pdp.iterations <= 10 && pt.iterations <= 12;
    assert!(verdict(
        6,
        pass,
        &detail,
        t.elapsed(),
        Duration::from_secs(60)
    ));
}

#[test]
fn criterion_07_psnr_band() {
    let Ok(path) = std::env::var(STANDARD_IMAGE_ENV) else {
        println!("SKIP criterion 7: set {STANDARD_IMAGE_ENV} to a 256x256 PGM to run the PSNR band check");
        return;
    };
    let t = Instant::now();
    let clean = load_image(&path).unwrap();
    let z = degrade(&clean, &DegradeSpec::noise(0.1, 7)).unwrap();
    let cfg = SolverConfig {
        variant: TvVariant::Aniso,
        alpha: 0.1,
        ..SolverConfig::default()
    };
    let run = run_solver(&z, &DataOperator::Identity, &cfg, Some(&clean)).unwrap();
    let p = psnr(&run.u, &clean).unwrap();
    let detail = format!("PSNR {p:.2} dB (band 19.25 +/- 0.75)");
    let pass = (p - 19.25).abs() <= 0.75;
    assert!(verdict(
        7,
        pass,
        &detail,
        t.elapsed(),
        Duration::from_secs(300)
    ));
}

#[test]
fn criterion_08_deblur_improvement() {
    let t = Instant::now();
    let clean = phantom(GridShape::square(64));
    let kernel = BlurKernel::motion(9).unwrap();
    let spec = DegradeSpec {
        noise_std: 0.01,
        blur: Some(kernel.clone()),
        seed: 8,
    };
    let z = degrade(&clean, &spec).unwrap();
    let k = DataOperator::blur(kernel, clean.shape()).unwrap();
    let degraded = psnr(&z, &clean).unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    for mu in [1e-6, 1e-9] {
        let cfg = AlmConfig {
            alpha: 0.01,
            mu,
            variant: TvVariant::Iso,
            outer_tol: 1e-5,
            ..AlmConfig::default()
        };
        match alm_run(&z, &k, &cfg, Some(&clean)) {
            Ok(out) => {
                let last = out.history.last().unwrap();
                let restored = psnr(&out.state.u, &clean).unwrap();
                if mu == 1e-6 {
                    pass &= last.err <= 1e-5 && restored >= degraded + 2.0;
                } else {
                    pass &= last.err <= 1e-5;
                }
                lines.push(format!(
                    "mu {mu:.0e}: {} outer, Err {:.2e}, PSNR {restored:.2}",
                    out.history.len(),
                    last.err
                ));
            }
            Err(e) => {
                pass = false;
                lines.push(format!("mu {mu:.0e}: {e}"));
            }
        }
    }
    let detail = format!(
        "degraded PSNR {degraded:.2}; {} (need Err <= 1e-5, gain >= 2 dB)",
        lines.join("; ")
    );
    assert!(verdict(
        8,
        pass,
        &detail,
        t.elapsed(),
        Duration::from_secs(180)
    ));
}

#[test]
fn criterion_09_residual_suite_zeroing() {
    let t = Instant::now();
    let mut worst = [0.0f64; 5];
    let mut worst_err = 0.0f64;
    let mut gap_missing = false;
    for (_, variant, z) in crit4_instances() {
        let cfg = crit4_config(Solver::Pdp, variant).alm();
        let out = alm_run(&z, &DataOperator::Identity, &cfg, None).unwrap();
        let r = out.history.last().unwrap();
        gap_missing |= r.gap.is_none();
        worst_err = worst_err.max(r.err);
        for (w, v) in worst.iter_mut().zip([
            r.res_u,
            r.res_lambda,
            r.res1,
            r.res2,
            r.gap.unwrap_or(f64::INFINITY).abs(),
        ]) {
            *w = w.max(v);
        }
    }
    let detail = format!(
        "res(u) {:.2e}, res(lambda) {:.2e}, Res1 {:.2e}, Res2 {:.2e}, gap {:.2e} (tol 1e-8) at Err {worst_err:.2e}",
        worst[0], worst[1], worst[2], worst[3], worst[4]
    );
    let pass = worst_err <= 1e-8 && !gap_missing && worst.iter().all(|&w| w <= 1e-8);
    assert!(verdict(
        9,
        pass,
        &detail,
        t.elapsed(),
        Duration::from_secs(5)
    ));
}

#[test]
fn criterion_10_determinism() {
    let t = Instant::now();
    let a = records_csv(&crit6_run(Solver::Pdp).history, false);
    let b = records_csv(&crit6_run(Solver::Pdp).history, false);
    let detail = format!("{} CSV lines, identical {}", a.lines().count(), a == b);
    assert!(verdict(
        10,
        a == b,
        &detail,
        t.elapsed(),
        Duration::from_secs(120)
    ));
}
