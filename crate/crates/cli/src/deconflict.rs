use std::fs;
use std::path::PathBuf;

use clap::Args;
use gradops::dense::{dot, norm};
use gradops::{
    aggregate, AggregationResult, Error, MethodKind, MethodSpec, RatioVariant, TaskGradients,
};
use serde::Serialize;

use crate::output::{echo_config, emit, json_text, rounded};
use crate::CliResult;

/// Relative slack for the no-conflict checks on gradops output.
const INVARIANT_TOL: f64 = 1e-9;

#[derive(Debug, Args, Serialize)]
pub struct DeconflictArgs {
    /// CSV file with one task gradient per row and no header
    #[arg(long)]
    pub input: PathBuf,
    /// Aggregator: gd, pcgrad, mgda, imtl-g or gradops
    #[arg(long, default_value = "gradops")]
    pub method: MethodKind,
    /// Trade-off exponent for gradops (0 keeps the plain sum)
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Ratio transform for gradops: identity or exp
    #[arg(long, default_value = "identity")]
    pub variant: RatioVariant,
    /// Seed for the pcgrad projection orders
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSON file; stdout when omitted
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parses headerless CSV rows of finite numbers. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_rows(text: &str) -> Result<Vec<Vec<f64>>, Error> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row_no = rows.len() + 1;
        let row = trimmed
            .split(',')
            .enumerate()
            .map(|(c, field)| {
                let field = field.trim();
                match field.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(Error::Parse {
                        line,
                        message: format!(
                            "row {row_no}, column {}: expected a finite number, found `{field}`",
                            c + 1
                        ),
                    }),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "row {row_no} has {} values, expected {}",
                        row.len(),
                        first.len()
                    ),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no gradient rows".into(),
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct Report<'a> {
    method: String,
    tasks: usize,
    dim: usize,
    input: &'a [Vec<f64>],
    modified: Option<&'a Vec<Vec<f64>>>,
    conflicted: Option<&'a Vec<bool>>,
    scalar_projections: Option<&'a Vec<f64>>,
    ratios: Option<&'a Vec<f64>>,
    weights: Option<&'a Vec<f64>>,
    coefficients: Option<&'a Vec<f64>>,
    update: &'a [f64],
    /// `g_i · g_j`
    dots_before: Vec<Vec<f64>>,
    /// `g'_i · g_j`
    dots_after: Option<Vec<Vec<f64>>>,
    /// `update · g_j`
    update_dots: &'a [f64],
    fallback: bool,
}

/// gradops guarantees that no modified gradient and not the update
/// conflict with any original task gradient.
fn check_no_conflict(grads: &TaskGradients, res: &AggregationResult) -> Result<(), Error> {
    let conflicts = |v: &[f64], g: &[f64]| dot(v, g) < -INVARIANT_TOL * norm(v) * norm(g);
    if let Some(modified) = &res.diagnostics.modified {
        for (i, gp) in modified.iter().enumerate() {
            for (j, g) in grads.rows().iter().enumerate() {
                if conflicts(gp, g) {
                    return Err(Error::Invariant(format!(
                        "modified gradient {i} conflicts with task {j}"
                    )));
                }
            }
        }
    }
    for (j, g) in grads.rows().iter().enumerate() {
        if conflicts(&res.update, g) {
            return Err(Error::Invariant(format!("update conflicts with task {j}")));
        }
    }
    Ok(())
}

pub fn run(args: &DeconflictArgs) -> CliResult {
    echo_config("deconflict", args)?;
    let text = fs::read_to_string(&args.input)?;
    let grads = TaskGradients::new(parse_rows(&text)?)?;
    let spec = MethodSpec {
        alpha: args.alpha,
        variant: args.variant,
        ..MethodSpec::new(args.method)
    }
    .with_seed(args.seed);
    let res = aggregate(&spec, &grads)?;
    if args.method == MethodKind::GradOps {
        check_no_conflict(&grads, &res)?;
    }
    let d = &res.diagnostics;
    let tradeoff = d.tradeoff.as_ref();
    let report = Report {
        method: spec.label(),
        tasks: grads.num_tasks(),
        dim: grads.dim(),
        input: grads.rows(),
        modified: d.modified.as_ref(),
        conflicted: d.conflicted.as_ref(),
        scalar_projections: tradeoff.map(|t| &t.scalar_projections),
        ratios: tradeoff.map(|t| &t.ratios),
        weights: tradeoff.map(|t| &t.weights),
        coefficients: d.coefficients.as_ref(),
        update: &res.update,
        dots_before: grads.gram(),
        dots_after: d.modified.as_ref().map(|m| {
            m.iter()
                .map(|gp| grads.rows().iter().map(|g| dot(gp, g)).collect())
                .collect()
        }),
        update_dots: &d.dots,
        fallback: d.fallback,
    };
    emit(args.output.as_deref(), &json_text(&rounded(&report)?))?;
    Ok(())
}
