//! Solver x variant x tolerance benchmark matrix.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::degrade::{degrade, DegradeSpec};
use crate::error::Result;
use crate::grid::Image;
use crate::linops::{BlurKernel, DataOperator};
use crate::prox::TvVariant;
use crate::report::{gap_csv, markdown_header, markdown_row, Summary};
use crate::runner::{run_solver, Solver, SolverConfig};

pub const THREADS_ENV: &str = "TVALM_THREADS";

#[derive(Clone, Debug)]
pub struct BenchSpec {
    /// Clean images with display names.
    pub images: Vec<(String, Image)>,
    pub solvers: Vec<Solver>,
    pub variants: Vec<TvVariant>,
    pub tols: Vec<f64>,
    /// Shared parameters; solver, variant and tolerance are overridden per cell.
    pub base: SolverConfig,
    pub noise: f64,
    pub blur: Option<BlurKernel>,
    pub seed: u64,
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub image: String,
    pub solver: Solver,
    pub variant: TvVariant,
    pub tol: f64,
    pub outcome: std::result::Result<Summary, CellError>,
}

/// `TVALM_THREADS` if set to a positive integer, else the available
/// parallelism.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
}

struct Job {
    image: usize,
    solver: Solver,
    variant: TvVariant,
    tol: f64,
}

/// Runs every cell; failures are recorded in place. Cells come back ordered
/// by image, variant, tolerance and solver regardless of the thread count.
pub fn run_bench(spec: &BenchSpec) -> Result<Vec<BenchCell>> {
    let mut inputs = Vec::with_capacity(spec.images.len());
    for (_, clean) in &spec.images {
        let degrade_spec = DegradeSpec {
            noise_std: spec.noise,
            blur: spec.blur.clone(),
            seed: spec.seed,
        };
        let z = degrade(clean, &degrade_spec)?;
        let k = match &spec.blur {
            Some(kernel) => DataOperator::blur(kernel.clone(), clean.shape())?,
            None => DataOperator::Identity,
        };
        inputs.push((z, k));
    }
    let mut jobs = Vec::new();
    for image in 0..spec.images.len() {
        for &variant in &spec.variants {
            for &tol in &spec.tols {
                for &solver in &spec.solvers {
                    jobs.push(Job {
                        image,
                        solver,
                        variant,
                        tol,
                    });
                }
            }
        }
    }
    let slots: Vec<Mutex<Option<BenchCell>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = spec.threads.clamp(1, jobs.len().max(1));
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let (z, k) = &inputs[job.image];
                let cfg = SolverConfig {
                    solver: job.solver,
                    variant: job.variant,
                    tol: job.tol,
                    ..spec.base.clone()
                };
                let clean = &spec.images[job.image].1;
                let outcome = match run_solver(z, k, &cfg, Some(clean)) {
                    Ok(run) => Summary::from_run(&run).ok_or_else(|| CellError {
                        kind: "empty".into(),
                        message: "run produced no metric records".into(),
                    }),
                    Err(e) => Err(CellError {
                        kind: e.kind().into(),
                        message: e.to_string(),
                    }),
                };
                *slots[i].lock().expect("slot lock") = Some(BenchCell {
                    image: spec.images[job.image].0.clone(),
                    solver: job.solver,
                    variant: job.variant,
                    tol: job.tol,
                    outcome,
                });
            });
        }
    });
    Ok(slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every job ran"))
        .collect())
}

const KEY_COLUMNS: [&str; 4] = ["image", "tv", "tol", "solver"];

fn key_cells(c: &BenchCell) -> Vec<String> {
    vec![
        c.image.clone(),
        c.variant.to_string(),
        format!("{:.0e}", c.tol),
        c.solver.label().to_string(),
    ]
}

pub fn bench_markdown(cells: &[BenchCell]) -> String {
    let mut columns = KEY_COLUMNS.to_vec();
    columns.extend(Summary::TABLE_COLUMNS);
    let mut out = markdown_header(&columns);
    out.push('\n');
    for c in cells {
        let mut row = key_cells(c);
        match &c.outcome {
            Ok(s) => row.extend(s.table_cells()),
            Err(e) => {
                row.push(format!("failed: {}", e.kind));
                row.extend((1..Summary::TABLE_COLUMNS.len()).map(|_| String::new()));
            }
        }
        out.push_str(&markdown_row(&row));
        out.push('\n');
    }
    out
}

pub const BENCH_CSV_HEADER: &str =
    "image,tv,tol,solver,n,time_ms,res_u,res_lambda,res1,res2,gap,gap_flag,psnr,err,status";

pub fn bench_csv(cells: &[BenchCell]) -> String {
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    for c in cells {
        let key = format!("{},{},{:e},{}", c.image, c.variant, c.tol, c.solver);
        let line = match &c.outcome {
            Ok(s) => format!(
                "{key},{},{:e},{:e},{:e},{:e},{:e},{},{},{},{:e},ok",
                s.n,
                s.total_wall_ms,
                s.res_u,
                s.res_lambda,
                s.res1,
                s.res2,
                gap_csv(s.gap, s.gap_flag),
                s.gap_flag.as_str(),
                s.psnr.map_or_else(String::new, |p| format!("{p:e}")),
                s.err
            ),
            Err(e) => format!("{key},,,,,,,,,,,{}", e.kind),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}
