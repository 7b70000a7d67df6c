use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dense;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Fractions of rows assigned to each split (normalized on use).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 2.0,
            validation: 1.0,
            test: 1.0,
        }
    }
}

impl SplitFractions {
    fn normalized(&self) -> Result<[f64; 3]> {
        let f = [self.train, self.validation, self.test];
        if f.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid("split fractions must be non-negative"));
        }
        let total: f64 = f.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("split fractions sum to zero"));
        }
        Ok(f.map(|x| x / total))
    }
}

/// One uniform draw per row from a seeded stream decides its split.
pub fn assign_splits(rows: usize, fractions: SplitFractions, seed: u64) -> Result<Vec<Split>> {
    let [train, validation, _] = fractions.normalized()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..rows)
        .map(|_| {
            let u: f64 = rng.random();
            if u < train {
                Split::Train
            } else if u < train + validation {
                Split::Validation
            } else {
                Split::Test
            }
        })
        .collect())
}

/// Feature matrix, binary task labels, and a split tag per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub task_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    /// `labels[row][task]`, each 0.0 or 1.0.
    pub labels: Vec<Vec<f64>>,
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        task_names: Vec<String>,
        features: Vec<Vec<f64>>,
        labels: Vec<Vec<f64>>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        if features.len() != labels.len() || features.len() != splits.len() {
            return Err(Error::invalid(
                "features, labels and splits differ in row count",
            ));
        }
        for (r, (x, y)) in features.iter().zip(&labels).enumerate() {
            if x.len() != feature_names.len() || y.len() != task_names.len() {
                return Err(Error::invalid(format!("row {r} has the wrong width")));
            }
            if x.iter().any(|v| v.is_nan()) {
                return Err(Error::NonFinite("dataset feature"));
            }
            if y.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::invalid(format!(
                    "row {r} has a label outside {{0, 1}}"
                )));
            }
        }
        Ok(Self {
            feature_names,
            task_names,
            features,
            labels,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.task_names.len()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.splits[i] == split)
            .collect()
    }

    /// A copy keeping only task `task`.
    pub fn single_task(&self, task: usize) -> Result<Dataset> {
        if task >= self.num_tasks() {
            return Err(Error::IndexOutOfRange {
                index: task,
                len: self.num_tasks(),
            });
        }
        Ok(Dataset {
            feature_names: self.feature_names.clone(),
            task_names: vec![self.task_names[task].clone()],
            features: self.features.clone(),
            labels: self.labels.iter().map(|y| vec![y[task]]).collect(),
            splits: self.splits.clone(),
        })
    }

    /// Standardizes every feature with the training rows' mean and deviation.
    pub fn standardize(&mut self) {
        let train = self.indices(Split::Train);
        if train.is_empty() {
            return;
        }
        for f in 0..self.num_features() {
            let n = train.len() as f64;
            let mean = train.iter().map(|&i| self.features[i][f]).sum::<f64>() / n;
            let var = train
                .iter()
                .map(|&i| (self.features[i][f] - mean).powi(2))
                .sum::<f64>()
                / n;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for row in self.features.iter_mut() {
                row[f] = (row[f] - mean) / sd;
            }
        }
    }
}

/// Parameters of the synthetic multi-task generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub rows: usize,
    pub features: usize,
    pub tasks: usize,
    /// Pairwise cosine between the tasks' label-generating directions.
    pub conflict: f64,
    /// Standard deviation of the logit noise, per task (a single value is broadcast).
    pub noise: Vec<f64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            rows: 4000,
            features: 16,
            tasks: 3,
            conflict: 0.0,
            noise: vec![0.1],
        }
    }
}

/// Draws `x ~ N(0, I)` and labels `y_t = [x·w_t + σ_t ε > 0]`, where the unit
/// directions `w_t` have pairwise cosine `spec.conflict`.
pub fn synth_dataset(seed: u64, spec: &SynthSpec, fractions: SplitFractions) -> Result<Dataset> {
    let SynthSpec {
        rows,
        features,
        tasks,
        conflict,
        ref noise,
    } = *spec;
    if rows == 0 || features == 0 || tasks == 0 {
        return Err(Error::invalid("rows, features and tasks must be positive"));
    }
    if features < tasks {
        return Err(Error::invalid("need at least as many features as tasks"));
    }
    let lower = if tasks > 1 {
        -1.0 / (tasks as f64 - 1.0)
    } else {
        -1.0
    };
    if !(conflict >= lower && conflict <= 1.0) {
        return Err(Error::invalid(format!(
            "pairwise cosine {conflict} is infeasible for {tasks} tasks (minimum {lower})"
        )));
    }
    let noise: Vec<f64> = match noise.len() {
        1 => vec![noise[0]; tasks],
        n if n == tasks => noise.clone(),
        n => {
            return Err(Error::invalid(format!(
                "noise needs 1 or {tasks} entries, got {n}"
            )))
        }
    };
    if noise.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::invalid("noise must be non-negative"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let directions = correlated_directions(&mut rng, features, tasks, conflict)?;

    let mut xs = Vec::with_capacity(rows);
    let mut ys = Vec::with_capacity(rows);
    for _ in 0..rows {
        let x: Vec<f64> = (0..features).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = directions
            .iter()
            .zip(&noise)
            .map(|(w, &s)| {
                let e: f64 = rng.sample(StandardNormal);
                if dense::dot(&x, w) + s * e > 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        xs.push(x);
        ys.push(y);
    }
    let splits = assign_splits(rows, fractions, seed.wrapping_add(0x9e37_79b9_7f4a_7c15))?;
    Dataset::new(
        (0..features).map(|f| format!("x{f}")).collect(),
        (0..tasks).map(|t| format!("task{t}")).collect(),
        xs,
        ys,
        splits,
    )
}

/// Unit vectors whose Gram matrix is `(1−ρ)I + ρ11ᵀ`.
fn correlated_directions(
    rng: &mut ChaCha8Rng,
    features: usize,
    tasks: usize,
    rho: f64,
) -> Result<Vec<Vec<f64>>> {
    // random orthonormal frame of `tasks` vectors
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(tasks);
    while frame.len() < tasks {
        let v: Vec<f64> = (0..features).map(|_| rng.sample(StandardNormal)).collect();
        let mut r = v.clone();
        for q in &frame {
            let c = dense::dot(q, &r);
            dense::axpy(-c, q, &mut r);
        }
        let n = dense::norm(&r);
        if n > 1e-6 * dense::norm(&v) {
            frame.push(dense::scaled(1.0 / n, &r));
        }
    }
    let gram = DMatrix::from_fn(tasks, tasks, |i, j| if i == j { 1.0 } else { rho });
    // the Gram matrix is only semidefinite at the feasibility boundary
    let jitter = DMatrix::identity(tasks, tasks) * 1e-12;
    let chol = (gram + jitter)
        .cholesky()
        .ok_or_else(|| Error::invalid(format!("pairwise cosine {rho} is not realizable")))?;
    let l = chol.l();
    Ok((0..tasks)
        .map(|t| {
            let mut w = vec![0.0; features];
            for k in 0..=t {
                dense::axpy(l[(t, k)], &frame[k], &mut w);
            }
            let n = dense::norm(&w);
            dense::scaled(1.0 / n, &w)
        })
        .collect())
}

/// Reads a headered CSV. Every feature and task column must parse as a
/// number; task columns must be 0 or 1. Empty `feature_columns` means every
/// column that is not a task column.
pub fn load_csv<P: AsRef<Path>>(
    path: P,
    feature_columns: &[String],
    task_columns: &[String],
    fractions: SplitFractions,
    seed: u64,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_csv(file, feature_columns, task_columns, fractions, seed)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(
    reader: R,
    feature_columns: &[String],
    task_columns: &[String],
    fractions: SplitFractions,
    seed: u64,
) -> Result<Dataset> {
    if task_columns.is_empty() {
        return Err(Error::invalid("at least one task column is required"));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &String| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.clone()))
    };
    let task_idx = task_columns.iter().map(find).collect::<Result<Vec<_>>>()?;
    let feature_names: Vec<String> = if feature_columns.is_empty() {
        header
            .iter()
            .filter(|h| !task_columns.contains(h))
            .cloned()
            .collect()
    } else {
        feature_columns.to_vec()
    };
    if feature_names.is_empty() {
        return Err(Error::invalid("no feature columns"));
    }
    let feature_idx = feature_names.iter().map(find).collect::<Result<Vec<_>>>()?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let cell = |i: usize| -> Result<f64> {
            let raw = rec.get(i).ok_or_else(|| Error::Parse {
                line,
                message: format!("missing field for column `{}`", header[i]),
            })?;
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric value `{raw}` in column `{}`", header[i]),
            })?;
            if v.is_nan() {
                return Err(Error::Parse {
                    line,
                    message: format!("NaN in column `{}`", header[i]),
                });
            }
            Ok(v)
        };
        let x = feature_idx
            .iter()
            .map(|&i| cell(i))
            .collect::<Result<Vec<_>>>()?;
        let y = task_idx
            .iter()
            .map(|&i| {
                let v = cell(i)?;
                if v == 0.0 || v == 1.0 {
                    Ok(v)
                } else {
                    Err(Error::Parse {
                        line,
                        message: format!("label `{v}` in column `{}` is not 0 or 1", header[i]),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        features.push(x);
        labels.push(y);
    }
    let splits = assign_splits(features.len(), fractions, seed)?;
    Dataset::new(
        feature_names,
        task_columns.to_vec(),
        features,
        labels,
        splits,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    const FIXTURE: &str = "a,b,y1,y2\n1.5,2,0,1\n-3,0.25,1,1\n0,1e3,0,0\n7,-1,1,0\n";

    #[test]
    fn parses_fixture_exactly() {
        let d = read_csv(
            FIXTURE.as_bytes(),
            &[],
            &names(&["y1", "y2"]),
            SplitFractions::default(),
            1,
        )
        .unwrap();
        assert_eq!(d.feature_names, names(&["a", "b"]));
        assert_eq!(
            d.features,
            vec![
                vec![1.5, 2.0],
                vec![-3.0, 0.25],
                vec![0.0, 1000.0],
                vec![7.0, -1.0]
            ]
        );
        assert_eq!(
            d.labels,
            vec![
                vec![0.0, 1.0],
                vec![1.0, 1.0],
                vec![0.0, 0.0],
                vec![1.0, 0.0]
            ]
        );
    }

    #[test]
    fn explicit_feature_columns() {
        let d = read_csv(
            FIXTURE.as_bytes(),
            &names(&["b"]),
            &names(&["y2"]),
            SplitFractions::default(),
            1,
        )
        .unwrap();
        assert_eq!(
            d.features,
            vec![vec![2.0], vec![0.25], vec![1000.0], vec![-1.0]]
        );
    }

    #[test]
    fn missing_task_column_is_named() {
        let e = read_csv(
            FIXTURE.as_bytes(),
            &[],
            &names(&["income"]),
            SplitFractions::default(),
            1,
        )
        .unwrap_err();
        assert_eq!(e, Error::MissingColumn("income".into()));
    }

    #[test]
    fn bad_cells_report_lines() {
        let text = "a,y\n1,0\nfoo,1\n";
        let e = read_csv(
            text.as_bytes(),
            &[],
            &names(&["y"]),
            SplitFractions::default(),
            1,
        )
        .unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let text = "a,y\n1,0\n2,0.5\n";
        let e = read_csv(
            text.as_bytes(),
            &[],
            &names(&["y"]),
            SplitFractions::default(),
            1,
        )
        .unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
    }

    #[test]
    fn splits_are_seeded() {
        let a = assign_splits(500, SplitFractions::default(), 11).unwrap();
        assert_eq!(
            a,
            assign_splits(500, SplitFractions::default(), 11).unwrap()
        );
        assert_ne!(
            a,
            assign_splits(500, SplitFractions::default(), 12).unwrap()
        );
        let train = a.iter().filter(|&&s| s == Split::Train).count();
        assert!((200..300).contains(&train), "{train}");
    }

    #[test]
    fn synthetic_is_reproducible() {
        let spec = SynthSpec {
            rows: 200,
            ..SynthSpec::default()
        };
        let a = synth_dataset(3, &spec, SplitFractions::default()).unwrap();
        let b = synth_dataset(3, &spec, SplitFractions::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            a,
            synth_dataset(4, &spec, SplitFractions::default()).unwrap()
        );
    }

    #[test]
    fn synthetic_directions_have_requested_cosine() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for &(t, rho) in &[(2usize, -0.8), (3, -0.4), (4, 0.3), (3, 1.0)] {
            let w = correlated_directions(&mut rng, 10, t, rho).unwrap();
            for i in 0..t {
                assert!((dense::norm(&w[i]) - 1.0).abs() < 1e-12);
                for j in (i + 1)..t {
                    assert!((dense::dot(&w[i], &w[j]) - rho).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn synthetic_rejects_infeasible_cosine() {
        let spec = SynthSpec {
            tasks: 3,
            conflict: -0.8,
            ..SynthSpec::default()
        };
        assert!(synth_dataset(0, &spec, SplitFractions::default()).is_err());
    }
}
