use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tvalm::bench::{bench_csv, bench_markdown, run_bench, threads_from_env, BenchSpec};
use tvalm::degrade::{degrade, phantom, DegradeSpec};
use tvalm::io::{load_image, save_image};
use tvalm::metrics::psnr_capped;
use tvalm::report::{markdown_header, records_csv, RunReport, Summary};
use tvalm::runner::{run_solver, Solver, SolverConfig};
use tvalm::{BlurKernel, DataOperator, Error, GridShape, Image, Result, TvVariant};

#[derive(Parser)]
#[command(
    name = "tvalm",
    version,
    about = "TV image restoration by semismooth Newton ALM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Add Gaussian noise to an image and restore it.
    Denoise(RunArgs),
    /// Blur and add noise to an image, then restore it.
    Deblur {
        #[command(flatten)]
        run: RunArgs,
        /// Horizontal motion blur length in pixels.
        #[arg(long, default_value_t = 40)]
        blur_len: usize,
    },
    /// Run a solver x variant x tolerance matrix and print the table.
    Bench(BenchArgs),
    /// Write the synthetic test scene.
    Phantom {
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value = "iso")]
    tv: TvVariant,
    /// Outer stopping value for Err.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 4.0)]
    sigma0: f64,
    #[arg(long, default_value_t = 4.0)]
    growth: f64,
    #[arg(long, default_value_t = 1e6)]
    sigma_max: f64,
    #[arg(long, default_value_t = 1e-4)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise standard deviation on the [0, 1] scale.
    #[arg(long)]
    noise: Option<f64>,
    /// Clean input image (binary PGM); the synthetic scene when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Side length of the synthetic scene.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// ALG2 acceleration modulus; 1 for denoising and mu for deblurring when omitted.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    alg2_max_iters: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "pdp")]
    solver: Solver,
    /// Restored image (PGM).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-iteration metrics (CSV).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Leave the wall-clock column of the CSV empty.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Directory of clean PGM images; the synthetic scene when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "pdp,pdd,pt,alg2")]
    solvers: Vec<Solver>,
    #[arg(long, value_delimiter = ',', default_value = "aniso,iso")]
    variants: Vec<TvVariant>,
    #[arg(long, value_delimiter = ',', default_value = "1e-4,1e-6")]
    tols: Vec<f64>,
    /// Deblur with this motion length instead of denoising.
    #[arg(long)]
    blur_len: Option<usize>,
    /// Worker threads; defaults to TVALM_THREADS or the core count.
    #[arg(long)]
    threads: Option<usize>,
    /// Markdown table output.
    #[arg(long)]
    md: Option<PathBuf>,
    /// CSV table output.
    #[arg(long)]
    csv: Option<PathBuf>,
}

impl ModelArgs {
    fn solver_config(&self, solver: Solver, deblur: bool) -> SolverConfig {
        SolverConfig {
            solver,
            alpha: self.alpha.unwrap_or(if deblur { 0.01 } else { 0.1 }),
            mu: self.mu.unwrap_or(if deblur { 1e-6 } else { 0.0 }),
            variant: self.tv,
            tol: self.tol,
            sigma0: self.sigma0,
            growth_c: self.growth,
            sigma_max: self.sigma_max,
            delta_inner: self.delta,
            alg2_gamma: self.gamma,
            alg2_max_iters: self.alg2_max_iters,
            ..SolverConfig::default()
        }
    }

    fn noise(&self, deblur: bool) -> f64 {
        self.noise.unwrap_or(if deblur { 0.01 } else { 0.1 })
    }

    fn clean_image(&self) -> Result<(Image, String)> {
        match &self.input {
            Some(path) => Ok((load_image(path)?, path.display().to_string())),
            None => Ok((
                phantom(GridShape::new(self.size, self.size)?),
                "phantom".into(),
            )),
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

fn cmd_run(args: &RunArgs, blur_len: Option<usize>) -> Result<()> {
    let deblur = blur_len.is_some();
    let (clean, input) = args.model.clean_image()?;
    let blur = blur_len.map(BlurKernel::motion).transpose()?;
    let spec = DegradeSpec {
        noise_std: args.model.noise(deblur),
        blur: blur.clone(),
        seed: args.model.seed,
    };
    let z = degrade(&clean, &spec)?;
    let k = match blur {
        Some(kernel) => DataOperator::blur(kernel, clean.shape())?,
        None => DataOperator::Identity,
    };
    let cfg = args.model.solver_config(args.solver, deblur);
    let run = run_solver(&z, &k, &cfg, Some(&clean))?;
    let summary = Summary::from_run(&run);
    if let Some(path) = &args.out {
        save_image(path, &run.u)?;
    }
    if let Some(path) = &args.csv {
        write(path, records_csv(&run.history, !args.no_timing))?;
    }
    if let Some(path) = &args.report {
        let report = RunReport {
            config: cfg,
            seed: args.model.seed,
            degrade: spec,
            input,
            rows: clean.shape().rows(),
            cols: clean.shape().cols(),
            records: run.history.clone(),
            summary: summary.clone(),
        };
        write(path, report.to_json())?;
    }
    println!("degraded PSNR {:.2} dB", psnr_capped(&z, &clean)?);
    println!("{}", markdown_header(&Summary::TABLE_COLUMNS));
    if let Some(s) = summary {
        println!("{}", s.table_row());
    }
    Ok(())
}

fn load_corpus(dir: &Path) -> Result<Vec<(String, Image)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidParameter {
            name: "corpus",
            reason: format!("no .pgm files in {}", dir.display()),
        });
    }
    paths
        .into_iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            Ok((name, load_image(&p)?))
        })
        .collect()
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let deblur = args.blur_len.is_some();
    let images = match &args.corpus {
        Some(dir) => load_corpus(dir)?,
        None => vec![(
            format!("phantom{}", args.model.size),
            phantom(GridShape::new(args.model.size, args.model.size)?),
        )],
    };
    let spec = BenchSpec {
        images,
        solvers: args.solvers.clone(),
        variants: args.variants.clone(),
        tols: args.tols.clone(),
        base: args.model.solver_config(Solver::Pdp, deblur),
        noise: args.model.noise(deblur),
        blur: args.blur_len.map(BlurKernel::motion).transpose()?,
        seed: args.model.seed,
        threads: args.threads.unwrap_or_else(threads_from_env),
    };
    let cells = run_bench(&spec)?;
    let md = bench_markdown(&cells);
    if let Some(path) = &args.md {
        write(path, &md)?;
    }
    if let Some(path) = &args.csv {
        write(path, bench_csv(&cells))?;
    }
    print!("{md}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Denoise(run) => cmd_run(run, None),
        Command::Deblur { run, blur_len } => cmd_run(run, Some(*blur_len)),
        Command::Bench(args) => cmd_bench(args),
        Command::Phantom { size, out } => {
            GridShape::new(*size, *size).and_then(|s| save_image(out, &phantom(s)))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let obj =
                serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{obj}");
            ExitCode::FAILURE
        }
    }
}
