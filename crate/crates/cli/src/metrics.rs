use std::fmt::Write as _;
use std::fs::File;
use std::path::PathBuf;

use clap::Args;
use gradops::format::fmt_num;
use gradops::metrics::{delta_m, mean_rank, MetricTable, TieRule};
use gradops::Error;
use serde::Serialize;

use crate::output::{csv_field, echo_config, emit};
use crate::CliResult;

#[derive(Debug, Args, Serialize)]
pub struct MetricsArgs {
    /// Score table CSV: `method,<task>,...` header, then a `direction` row
    #[arg(long)]
    pub table: PathBuf,
    /// Row that every method is compared against
    #[arg(long)]
    pub baseline: String,
    /// Rank given to tied scores: average or min
    #[arg(long, default_value = "average")]
    pub ties: TieRule,
    /// Accepted for a uniform interface; metrics use no randomness
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV file; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One line per method: `method,delta_m,delta_m_percent,mean_rank`.
/// `delta_m` is a fraction (positive means worse than the baseline); the
/// mean rank is left empty for a single-row table.
pub fn render(table: &MetricTable, baseline: &str, ties: TieRule) -> Result<String, Error> {
    table.row(baseline)?;
    let ranks = if table.methods().len() >= 2 {
        Some(mean_rank(table, ties)?)
    } else {
        None
    };
    let mut out = String::from("method,delta_m,delta_m_percent,mean_rank\n");
    for (k, m) in table.methods().iter().enumerate() {
        let dm = delta_m(table, m, baseline)?;
        let rank = ranks.as_ref().map(|r| fmt_num(r[k])).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{rank}",
            csv_field(m),
            fmt_num(dm),
            fmt_num(100.0 * dm)
        );
    }
    Ok(out)
}

pub fn run(args: &MetricsArgs) -> CliResult {
    echo_config("metrics", args)?;
    let table = MetricTable::read_csv(File::open(&args.table)?)?;
    let text = render(&table, &args.baseline, args.ties)?;
    emit(args.out.as_deref(), &text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use gradops::metrics::Direction;

    #[test]
    fn renders_fraction_percent_and_rank() {
        let t = MetricTable::new(
            vec!["base".into(), "b".into()],
            vec!["x".into()],
            vec![Direction::Higher],
            vec![vec![0.5], vec![0.4]],
        )
        .unwrap();
        let s = render(&t, "base", TieRule::Average).unwrap();
        assert_eq!(
            s,
            "method,delta_m,delta_m_percent,mean_rank\nbase,0,0,1\nb,0.2,20,2\n"
        );
    }

    #[test]
    fn missing_baseline_is_named() {
        let t = MetricTable::new(
            vec!["a".into()],
            vec!["x".into()],
            vec![Direction::Higher],
            vec![vec![0.5]],
        )
        .unwrap();
        let e = render(&t, "nope", TieRule::Min).unwrap_err();
        assert_eq!(e, Error::MissingRow("nope".into()));
    }
}
