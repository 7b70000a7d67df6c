//! Cross-method summaries: relative drop against a baseline (Δm) and mean rank (MR).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_num;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Higher,
    Lower,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "higher" => Ok(Direction::Higher),
            "lower" => Ok(Direction::Lower),
            other => Err(Error::invalid(format!(
                "direction must be `higher` or `lower`, got `{other}`"
            ))),
        }
    }
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Higher => "higher",
            Direction::Lower => "lower",
        }
    }
}

/// How tied values share rank positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieRule {
    /// Ties get the mean of the positions they occupy (1, 2.5, 2.5, 4).
    #[default]
    Average,
    /// Ties get the best position they occupy (1, 2, 2, 4).
    Min,
}

impl std::str::FromStr for TieRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(TieRule::Average),
            "min" => Ok(TieRule::Min),
            other => Err(Error::invalid(format!("unknown tie rule `{other}`"))),
        }
    }
}

/// Method × task score matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricTable {
    methods: Vec<String>,
    tasks: Vec<String>,
    directions: Vec<Direction>,
    values: Vec<Vec<f64>>,
}

impl MetricTable {
    pub fn new(
        methods: Vec<String>,
        tasks: Vec<String>,
        directions: Vec<Direction>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::invalid("metric table needs at least one task"));
        }
        if directions.len() != tasks.len() {
            return Err(Error::DimensionMismatch {
                expected: tasks.len(),
                found: directions.len(),
            });
        }
        if values.len() != methods.len() {
            return Err(Error::DimensionMismatch {
                expected: methods.len(),
                found: values.len(),
            });
        }
        for row in &values {
            if row.len() != tasks.len() {
                return Err(Error::DimensionMismatch {
                    expected: tasks.len(),
                    found: row.len(),
                });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("metric table value"));
            }
        }
        for (i, m) in methods.iter().enumerate() {
            if methods[..i].contains(m) {
                return Err(Error::invalid(format!("duplicate method row `{m}`")));
            }
        }
        Ok(Self {
            methods,
            tasks,
            directions,
            values,
        })
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn tasks(&self) -> &[String] {
        &self.tasks
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn row(&self, method: &str) -> Result<&[f64]> {
        self.methods
            .iter()
            .position(|m| m == method)
            .map(|i| self.values[i].as_slice())
            .ok_or_else(|| Error::MissingRow(method.to_string()))
    }

    /// Appends a method row.
    pub fn push(&mut self, method: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let method = method.into();
        if values.len() != self.tasks.len() {
            return Err(Error::DimensionMismatch {
                expected: self.tasks.len(),
                found: values.len(),
            });
        }
        if self.methods.contains(&method) {
            return Err(Error::invalid(format!("duplicate method row `{method}`")));
        }
        self.methods.push(method);
        self.values.push(values);
        Ok(())
    }

    /// Reads the CSV layout written by [`MetricTable::write_csv`]:
    ///
    /// ```text
    /// method,<task>,<task>,...
    /// direction,higher|lower,...
    /// <method>,<value>,...
    /// ```
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        if header.len() < 2 || &header[0] != "method" {
            return Err(Error::Parse {
                line: 1,
                message: "header must be `method,<task>,...`".into(),
            });
        }
        let tasks: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut directions = None;
        let mut methods = Vec::new();
        let mut values = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            if rec.len() != tasks.len() + 1 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} fields, found {}", tasks.len() + 1, rec.len()),
                });
            }
            if k == 0 {
                if &rec[0] != "direction" {
                    return Err(Error::Parse {
                        line,
                        message: "second line must be the `direction` row".into(),
                    });
                }
                let d = rec
                    .iter()
                    .skip(1)
                    .map(|s| s.parse::<Direction>())
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| Error::Parse {
                        line,
                        message: e.to_string(),
                    })?;
                directions = Some(d);
                continue;
            }
            let row = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("non-numeric value `{s}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            methods.push(rec[0].to_string());
            values.push(row);
        }
        let directions = directions.ok_or(Error::Parse {
            line: 2,
            message: "missing `direction` row".into(),
        })?;
        MetricTable::new(methods, tasks, directions, values)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut header = vec!["method".to_string()];
        header.extend(self.tasks.iter().cloned());
        w.write_record(&header).map_err(io)?;
        let mut dirs = vec!["direction".to_string()];
        dirs.extend(self.directions.iter().map(|d| d.as_str().to_string()));
        w.write_record(&dirs).map_err(io)?;
        for (m, row) in self.methods.iter().zip(&self.values) {
            let mut rec = vec![m.clone()];
            rec.extend(row.iter().map(|&x| fmt_num(x)));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean relative change against `baseline`, signed so that positive means worse:
/// `(1/T) Σ_i (−1)^{l_i} (M_{m,i} − M_{b,i}) / M_{b,i}` with `l_i = 1` for
/// higher-is-better tasks. Returned as a fraction.
pub fn delta_m(table: &MetricTable, method: &str, baseline: &str) -> Result<f64> {
    let m = table.row(method)?;
    let b = table.row(baseline)?;
    let mut total = 0.0;
    for (i, dir) in table.directions.iter().enumerate() {
        if b[i] == 0.0 {
            return Err(Error::UndefinedMetric(format!(
                "baseline `{baseline}` is zero on task `{}`",
                table.tasks[i]
            )));
        }
        let rel = (m[i] - b[i]) / b[i];
        total += match dir {
            Direction::Higher => -rel,
            Direction::Lower => rel,
        };
    }
    Ok(total / table.tasks.len() as f64)
}

/// Mean over tasks of each method's rank (1 = best), in table row order.
pub fn mean_rank(table: &MetricTable, ties: TieRule) -> Result<Vec<f64>> {
    let k = table.methods.len();
    if k < 2 {
        return Err(Error::invalid("mean rank needs at least 2 methods"));
    }
    let mut sums = vec![0.0; k];
    for (t, dir) in table.directions.iter().enumerate() {
        let key = |m: usize| match dir {
            Direction::Higher => -table.values[m][t],
            Direction::Lower => table.values[m][t],
        };
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
        let mut start = 0;
        while start < k {
            let mut end = start + 1;
            while end < k && key(order[end]) == key(order[start]) {
                end += 1;
            }
            // positions start+1 ..= end share a value
            let rank = match ties {
                TieRule::Average => (start + 1 + end) as f64 / 2.0,
                TieRule::Min => (start + 1) as f64,
            };
            for &m in &order[start..end] {
                sums[m] += rank;
            }
            start = end;
        }
    }
    let t = table.tasks.len() as f64;
    Ok(sums.into_iter().map(|s| s / t).collect())
}
