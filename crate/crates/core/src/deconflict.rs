//! Conflict detection and orthogonal-projection deconfliction.
//!
//! For a task whose gradient conflicts with at least one other task, the
//! modified gradient is its component orthogonal to the span of all other
//! task gradients. Tasks without conflicts pass through untouched. Every
//! modified gradient then has a non-negative inner product with every
//! original gradient, and so does any non-negative combination of them.

use crate::dense::{self, GsOptions};
use crate::error::{Error, Result};

/// Per-task gradients with respect to the shared parameters, one row per task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGradients {
    rows: Vec<Vec<f64>>,
    dim: usize,
}

impl TaskGradients {
    /// Validates `T >= 2`, a common dimension `d >= 1`, and finite entries.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 task gradients, got {}",
                rows.len()
            )));
        }
        Self::with_any_count(rows)
    }

    /// Like [`TaskGradients::new`] but accepts a single task.
    pub(crate) fn with_any_count(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || dim == 0 {
            return Err(Error::invalid("task gradients must be non-empty"));
        }
        for r in &rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            dense::ensure_finite(r, "task gradient")?;
        }
        Ok(Self { rows, dim })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn num_tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.rows
    }

    /// `G = Σ g_i`.
    pub fn sum(&self) -> Vec<f64> {
        dense::sum_rows(&self.rows, self.dim)
    }

    /// T×T matrix of pairwise inner products.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|a| self.rows.iter().map(|b| dense::dot(a, b)).collect())
            .collect()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.rows.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.rows.len(),
            });
        }
        Ok(())
    }
}

/// Numerical knobs for deconfliction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeconflictOptions {
    /// Gram-Schmidt settings for the span of the other tasks.
    pub gs: GsOptions,
    /// A projected gradient with `‖g'_i‖ <= zero_tol · ‖g_i‖` is set to exactly zero.
    pub zero_tol: f64,
}

impl Default for DeconflictOptions {
    fn default() -> Self {
        Self {
            gs: GsOptions::default(),
            zero_tol: 1e-12,
        }
    }
}

/// Result of deconflicting every task.
#[derive(Debug, Clone, PartialEq)]
pub struct DeconflictOutcome {
    /// `g'_i` for every task.
    pub modified: Vec<Vec<f64>>,
    /// Whether task `i` conflicted with at least one other task.
    pub conflicted: Vec<bool>,
    /// True iff every `g'_i` is the zero vector.
    pub all_zero: bool,
}

impl DeconflictOutcome {
    /// `G' = Σ g'_i`.
    pub fn sum(&self) -> Vec<f64> {
        let dim = self.modified.first().map(Vec::len).unwrap_or(0);
        dense::sum_rows(&self.modified, dim)
    }
}

/// True iff some other task's gradient has a strictly negative inner product
/// with task `i`'s gradient.
pub fn has_conflict(i: usize, grads: &TaskGradients) -> Result<bool> {
    grads.check_index(i)?;
    let gi = grads.row(i);
    Ok(grads
        .rows()
        .iter()
        .enumerate()
        .any(|(k, gk)| k != i && dense::dot(gi, gk) < 0.0))
}

/// `g'_i`: unchanged when task `i` has no conflict, otherwise `g_i` minus its
/// projection onto `span{g_j : j ≠ i}` (basis built in ascending task order).
pub fn deconflict_one(
    i: usize,
    grads: &TaskGradients,
    opts: &DeconflictOptions,
) -> Result<Vec<f64>> {
    if !has_conflict(i, grads)? {
        return Ok(grads.row(i).to_vec());
    }
    let others: Vec<&[f64]> = grads
        .rows()
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, g)| g.as_slice())
        .collect();
    let basis = dense::gram_schmidt_with(&others, opts.gs)?;
    let gi = grads.row(i);
    let mut out = basis.residual(gi)?;
    if opts.gs.reorthogonalize {
        out = basis.residual(&out)?;
    }
    if dense::norm(&out) <= opts.zero_tol * dense::norm(gi) {
        out.iter_mut().for_each(|x| *x = 0.0);
    }
    Ok(out)
}

/// Deconflicts every task against the original gradients.
pub fn deconflict_all(
    grads: &TaskGradients,
    opts: &DeconflictOptions,
) -> Result<DeconflictOutcome> {
    let t = grads.num_tasks();
    if t < 2 {
        return Err(Error::invalid("deconfliction needs at least 2 tasks"));
    }
    let mut modified = Vec::with_capacity(t);
    let mut conflicted = Vec::with_capacity(t);
    for i in 0..t {
        conflicted.push(has_conflict(i, grads)?);
        modified.push(deconflict_one(i, grads, opts)?);
    }
    let all_zero = modified.iter().all(|g| g.iter().all(|&x| x == 0.0));
    Ok(DeconflictOutcome {
        modified,
        conflicted,
        all_zero,
    })
}
