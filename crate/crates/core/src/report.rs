//! Run reports: JSON snapshot, per-iteration CSV and summary table rows.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::degrade::DegradeSpec;
use crate::metrics::{GapFlag, MetricRecord};
use crate::runner::{RunResult, SolverConfig};

pub const CSV_HEADER: &str =
    "k,res_u,res_lambda,err,res1,res2,gap,psnr,wall_ms,inner_newton,avg_krylov,gap_flag";

/// Final row of a run, in the column order of the result tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub total_wall_ms: f64,
    pub res_u: f64,
    pub res_lambda: f64,
    pub res1: f64,
    pub res2: f64,
    pub gap: Option<f64>,
    pub gap_flag: GapFlag,
    pub psnr: Option<f64>,
    pub err: f64,
}

impl Summary {
    pub fn from_run(run: &RunResult) -> Option<Self> {
        let last = run.last()?;
        Some(Self {
            n: run.iterations,
            total_wall_ms: run.total_wall_ms,
            res_u: last.res_u,
            res_lambda: last.res_lambda,
            res1: last.res1,
            res2: last.res2,
            gap: last.gap,
            gap_flag: last.gap_flag,
            psnr: last.psnr,
            err: last.err,
        })
    }

    pub const TABLE_COLUMNS: [&'static str; 9] = [
        "n", "time", "res(u)", "res(λ)", "Res1", "Res2", "Gap", "PSNR", "Err",
    ];

    /// Cells matching [`Summary::TABLE_COLUMNS`].
    pub fn table_cells(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            format!("{:.2}s", self.total_wall_ms / 1e3),
            sci(self.res_u),
            sci(self.res_lambda),
            sci(self.res1),
            sci(self.res2),
            gap_cell(self.gap, self.gap_flag),
            self.psnr.map_or_else(String::new, |p| format!("{p:.2}")),
            sci(self.err),
        ]
    }

    pub fn table_row(&self) -> String {
        markdown_row(&self.table_cells())
    }
}

fn sci(v: f64) -> String {
    format!("{v:.2e}")
}

fn gap_cell(gap: Option<f64>, flag: GapFlag) -> String {
    match (gap, flag) {
        (Some(g), _) => format!("{g:.2e}"),
        (None, GapFlag::Infeasible) => "inf".into(),
        (None, _) => "-".into(),
    }
}

pub fn markdown_row(cells: &[String]) -> String {
    format!("| {} |", cells.join(" | "))
}

pub fn markdown_header(columns: &[&str]) -> String {
    let names: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
    let rule: Vec<String> = columns.iter().map(|_| "---".to_string()).collect();
    format!("{}\n{}", markdown_row(&names), markdown_row(&rule))
}

/// Everything needed to repeat a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: SolverConfig,
    pub seed: u64,
    pub degrade: DegradeSpec,
    /// Input path, or `phantom` for the synthetic scene.
    pub input: String,
    pub rows: usize,
    pub cols: usize,
    pub records: Vec<MetricRecord>,
    pub summary: Option<Summary>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

pub(crate) fn gap_csv(gap: Option<f64>, flag: GapFlag) -> String {
    match (gap, flag) {
        (Some(g), _) => format!("{g:e}"),
        (None, GapFlag::Infeasible) => "inf".into(),
        (None, _) => String::new(),
    }
}

/// Per-iteration CSV. With `timing = false` the `wall_ms` column is left
/// empty so that repeated runs compare byte for byte. Infinite gaps are
/// written as `inf` and missing values as empty cells.
pub fn records_csv(records: &[MetricRecord], timing: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let gap = gap_csv(r.gap, r.gap_flag);
        let psnr = r.psnr.map_or_else(String::new, |p| format!("{p:e}"));
        let wall = if timing {
            format!("{:e}", r.wall_ms)
        } else {
            String::new()
        };
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{},{},{},{},{:e},{}",
            r.k,
            r.res_u,
            r.res_lambda,
            r.err,
            r.res1,
            r.res2,
            gap,
            psnr,
            wall,
            r.inner_newton,
            r.avg_krylov,
            r.gap_flag.as_str()
        )
        .expect("writing to a String");
    }
    out
}
