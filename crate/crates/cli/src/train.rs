use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use clap::Args;
use gradops::format::fmt_num;
use gradops::trainer::{train_run, FlatRunConfig, RunConfig};
use gradops::Error;
use serde::Serialize;

use crate::output::{csv_field, echo_config, json_text, rounded};
use crate::CliResult;

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Flat TOML run config; built-in defaults when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's `seed` (default: the config value, 0 if unset)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for `report.json` and `table.csv`
    #[arg(long, default_value = "train-out")]
    pub out_dir: PathBuf,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Reads a flat config; a relative `csv_path` is taken relative to the file.
pub fn read_config(path: &Path) -> Result<FlatRunConfig, Error> {
    let text = fs::read_to_string(path)?;
    let mut flat: FlatRunConfig = toml::from_str(&text).map_err(|e| Error::Parse {
        line: e.span().map_or(1, |s| line_of(&text, s.start)),
        message: e.message().to_string(),
    })?;
    if let (Some(csv), Some(dir)) = (&flat.csv_path, path.parent()) {
        if csv.is_relative() {
            flat.csv_path = Some(dir.join(csv));
        }
    }
    Ok(flat)
}

pub fn run(args: &TrainArgs) -> CliResult {
    let mut flat = match &args.config {
        Some(p) => read_config(p)?,
        None => FlatRunConfig::default(),
    };
    if let Some(seed) = args.seed {
        flat.seed = seed;
    }
    let cfg = RunConfig::try_from(flat)?;
    echo_config("train", &cfg)?;
    let report = train_run(&cfg)?;
    fs::create_dir_all(&args.out_dir)?;
    fs::write(
        args.out_dir.join("report.json"),
        json_text(&rounded(&report)?),
    )?;
    let table = File::create(args.out_dir.join("table.csv"))?;
    report.metric_table()?.write_csv(table)?;

    let mut out = String::from("task,validation_auc,test_auc\n");
    for (t, name) in report.tasks.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{}",
            csv_field(name),
            fmt_num(report.final_validation_auc[t]),
            fmt_num(report.final_test_auc[t])
        );
    }
    print!("{out}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_carry_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        fs::write(&p, "epochs = 3\nbogus_key = 1\n").unwrap();
        assert!(matches!(read_config(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn relative_csv_paths_resolve_against_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        fs::write(&p, "source = \"csv\"\ncsv_path = \"data.csv\"\n").unwrap();
        let flat = read_config(&p).unwrap();
        assert_eq!(flat.csv_path, Some(dir.path().join("data.csv")));
    }
}
