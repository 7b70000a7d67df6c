use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use gradops::format::fmt_num;
use gradops::optim::AdamHyper;
use gradops::toy2d::{run_trajectory_with, ToyPoint, TrajectoryRecord};
use gradops::{Error, MethodKind, MethodSpec, RatioVariant};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{csv_field, echo_config, emit, json_text, rounded};
use crate::{CliResult, Failure};

/// A run counts as converged when its terminal residual is below this.
pub const CONVERGED_RESIDUAL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct AdamArgs {
    /// Adam learning rate
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// Adam first-moment decay
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    /// Adam second-moment decay
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    /// Adam denominator offset
    #[arg(long, default_value_t = 1e-8)]
    pub adam_eps: f64,
}

impl AdamArgs {
    fn hyper(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_eps,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ToyArgs {
    /// Aggregator: gd, pcgrad, mgda, imtl-g or gradops
    #[arg(long, default_value = "gradops")]
    pub method: MethodKind,
    /// Trade-off exponent for gradops
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Ratio transform for gradops: identity or exp
    #[arg(long, default_value = "identity")]
    pub variant: RatioVariant,
    /// Start point: `x,y` or a preset (paper1, paper2, paper3)
    #[arg(long, default_value = "paper1", allow_hyphen_values = true)]
    pub init: String,
    /// Number of optimizer steps (at least 1)
    #[arg(long, default_value_t = 20_000)]
    pub steps: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub adam: AdamArgs,
    /// Seed for the pcgrad projection orders
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trajectory CSV file; not written when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary JSON file; stdout when omitted
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// Trade-off exponents for gradops, comma or space separated (e.g. `0,-2,-5`)
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',', allow_negative_numbers = true)]
    pub alphas: Vec<f64>,
    /// Aggregators; methods other than gradops run once per start point
    #[arg(long, num_args = 1.., value_delimiter = ',', default_value = "gradops")]
    pub methods: Vec<MethodKind>,
    /// Start point, `x,y` or a preset; repeat the flag for several
    #[arg(long, action = clap::ArgAction::Append, default_values = ["paper1", "paper2", "paper3"], allow_hyphen_values = true)]
    pub inits: Vec<String>,
    /// Ratio transform for gradops: identity or exp
    #[arg(long, default_value = "identity")]
    pub variant: RatioVariant,
    /// Number of optimizer steps per run (at least 1)
    #[arg(long, default_value_t = 20_000)]
    pub steps: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub adam: AdamArgs,
    /// Seed for the pcgrad projection orders
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the per-run trajectories and `summary.csv`
    #[arg(long, default_value = "sweep-out")]
    pub out_dir: PathBuf,
}

fn trajectory_csv(rec: &TrajectoryRecord) -> String {
    let mut s = String::from("step,theta1,theta2,loss1,loss2,residual\n");
    for e in &rec.steps {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            e.step,
            fmt_num(e.theta[0]),
            fmt_num(e.theta[1]),
            fmt_num(e.loss1),
            fmt_num(e.loss2),
            fmt_num(e.residual)
        );
    }
    s
}

#[derive(Serialize)]
struct Summary<'a> {
    method: String,
    init: [f64; 2],
    steps_run: usize,
    terminal: [f64; 2],
    loss1: f64,
    loss2: f64,
    residual: f64,
    converged: bool,
    diverged: &'a Option<String>,
}

fn summarize(rec: &TrajectoryRecord) -> Summary<'_> {
    let last = rec.terminal();
    Summary {
        method: rec.method.label(),
        init: rec.init.0,
        steps_run: last.step,
        terminal: last.theta,
        loss1: last.loss1,
        loss2: last.loss2,
        residual: last.residual,
        converged: rec.diverged.is_none() && last.residual < CONVERGED_RESIDUAL,
        diverged: &rec.diverged,
    }
}

pub fn run_toy(args: &ToyArgs) -> CliResult {
    echo_config("toy2d", args)?;
    if args.steps == 0 {
        return Err(Error::InvalidArgument("--steps must be at least 1".into()).into());
    }
    let init: ToyPoint = args.init.parse()?;
    let spec = MethodSpec {
        alpha: args.alpha,
        variant: args.variant,
        ..MethodSpec::new(args.method)
    }
    .with_seed(args.seed);
    let rec = run_trajectory_with(&spec, init, args.steps, args.adam.hyper())?;
    if let Some(path) = &args.out {
        fs::write(path, trajectory_csv(&rec))?;
    }
    emit(
        args.summary.as_deref(),
        &json_text(&rounded(&summarize(&rec))?),
    )?;
    match &rec.diverged {
        Some(why) => Err(Failure::diverged(why.clone())),
        None => Ok(()),
    }
}

struct Cell {
    spec: MethodSpec,
    alpha: Option<f64>,
    init: String,
}

impl Cell {
    fn file_name(&self) -> String {
        let mut name = self.spec.kind.as_str().to_string();
        if let Some(a) = self.alpha {
            name.push_str(&format!("_alpha{a}"));
        }
        name.push('_');
        name.push_str(&self.init);
        let clean: String = name
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || "-._".contains(c) {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        clean + ".csv"
    }
}

enum CellOutcome {
    Done(TrajectoryRecord),
    Failed(Failure),
}

fn run_cell(cell: &Cell, steps: usize, hyper: AdamHyper, dir: &Path) -> CellOutcome {
    let run = || -> CliResult<TrajectoryRecord> {
        let init: ToyPoint = cell.init.parse()?;
        let rec = run_trajectory_with(&cell.spec, init, steps, hyper)?;
        fs::write(dir.join(cell.file_name()), trajectory_csv(&rec))?;
        Ok(rec)
    };
    match run() {
        Ok(rec) => CellOutcome::Done(rec),
        Err(f) => CellOutcome::Failed(f),
    }
}

pub fn run_sweep(args: &SweepArgs) -> CliResult {
    echo_config("sweep", args)?;
    if args.steps == 0 {
        return Err(Error::InvalidArgument("--steps must be at least 1".into()).into());
    }
    let mut cells = Vec::new();
    for &kind in &args.methods {
        let alphas: Vec<Option<f64>> = if kind == MethodKind::GradOps {
            args.alphas.iter().map(|&a| Some(a)).collect()
        } else {
            vec![None]
        };
        for alpha in alphas {
            for init in &args.inits {
                let spec = MethodSpec {
                    alpha: alpha.unwrap_or(0.0),
                    variant: args.variant,
                    ..MethodSpec::new(kind)
                }
                .with_seed(args.seed);
                cells.push(Cell {
                    spec,
                    alpha,
                    init: init.clone(),
                });
            }
        }
    }
    fs::create_dir_all(&args.out_dir)?;
    let hyper = args.adam.hyper();
    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|c| run_cell(c, args.steps, hyper, &args.out_dir))
        .collect();

    let mut summary = String::from("method,alpha,init,theta1,theta2,residual,converged,status\n");
    let mut first_failure = None;
    let mut succeeded = 0;
    for (cell, outcome) in cells.iter().zip(outcomes) {
        let alpha = cell.alpha.map(fmt_num).unwrap_or_default();
        let prefix = format!("{},{alpha},{}", cell.spec.kind, csv_field(&cell.init));
        match outcome {
            CellOutcome::Done(rec) => {
                let s = summarize(&rec);
                let status = if rec.diverged.is_some() {
                    "diverged"
                } else {
                    "ok"
                };
                if let Some(why) = &rec.diverged {
                    eprintln!("{}: {why}", cell.file_name());
                    first_failure.get_or_insert(Failure::diverged(why.clone()));
                } else {
                    succeeded += 1;
                }
                let _ = writeln!(
                    summary,
                    "{prefix},{},{},{},{},{status}",
                    fmt_num(s.terminal[0]),
                    fmt_num(s.terminal[1]),
                    fmt_num(s.residual),
                    s.converged
                );
            }
            CellOutcome::Failed(f) => {
                eprintln!("{}: {}", cell.file_name(), f.message);
                let _ = writeln!(summary, "{prefix},,,,false,failed");
                first_failure.get_or_insert(f);
            }
        }
    }
    fs::write(args.out_dir.join("summary.csv"), summary)?;
    match first_failure {
        Some(f) if succeeded == 0 => Err(f),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_file_names_are_filesystem_safe() {
        let cell = Cell {
            spec: MethodSpec::gradops(-2.0),
            alpha: Some(-2.0),
            init: "0.5,-1".into(),
        };
        assert_eq!(cell.file_name(), "gradops_alpha-2_0.5_-1.csv");
        let cell = Cell {
            spec: MethodSpec::new(MethodKind::ImtlG),
            alpha: None,
            init: "paper1".into(),
        };
        assert_eq!(cell.file_name(), "imtl-g_paper1.csv");
    }
}
