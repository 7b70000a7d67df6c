//! Optimizer state and step-size bounds.
//!
//! The bounds assume plain steps `θ ← θ − t·d` and an `L`-Lipschitz gradient
//! of the summed loss. Adam is provided for trajectory and training runs; the
//! bounds say nothing about it.

use serde::{Deserialize, Serialize};

use crate::dense;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("adam epsilon must be positive"));
        }
        Ok(())
    }
}

/// Bias-corrected Adam moments for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(dim: usize, hyper: AdamHyper) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            hyper,
        })
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                found: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grad.len()
                },
            });
        }
        dense::ensure_finite(grad, "adam gradient")?;
        let AdamHyper {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.hyper;
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * g;
            self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * g * g;
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            params[k] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(state: &AdamState, params: &[f64], grad: &[f64]) -> Result<(Vec<f64>, AdamState)> {
    let mut s = state.clone();
    let mut p = params.to_vec();
    s.step(&mut p, grad)?;
    Ok((p, s))
}

/// `θ ← θ − lr · d`.
pub fn plain_step(params: &mut [f64], direction: &[f64], lr: f64) -> Result<()> {
    if params.len() != direction.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            found: direction.len(),
        });
    }
    dense::axpy(-lr, direction, params);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    /// `2 / (T L)` for the unweighted deconflicted sum.
    Unweighted,
    /// `min_{i∈T⁺, j} 2 w_i ‖g'_i‖² / (T L w_j² ‖g'_j‖²)` for the reweighted sum.
    Weighted,
}

/// A step-size ceiling: descent is guaranteed for steps strictly below `t_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepBound {
    pub t_max: f64,
    pub kind: BoundKind,
    pub num_tasks: usize,
    pub lipschitz: f64,
}

fn check_lipschitz(l: f64) -> Result<()> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::invalid(format!(
            "Lipschitz constant must be positive, got {l}"
        )));
    }
    Ok(())
}

/// `t_max = 2 / (T·L)`.
pub fn unweighted_bound(num_tasks: usize, lipschitz: f64) -> Result<StepBound> {
    if num_tasks == 0 {
        return Err(Error::invalid("need at least one task"));
    }
    check_lipschitz(lipschitz)?;
    Ok(StepBound {
        t_max: 2.0 / (num_tasks as f64 * lipschitz),
        kind: BoundKind::Unweighted,
        num_tasks,
        lipschitz,
    })
}

/// `t_max = min_{i ∈ T⁺, j} 2 w_i ‖g'_i‖² / (T L w_j² ‖g'_j‖²)` where `T⁺` are
/// the tasks with non-zero `‖g'_i‖²`. Pairs whose denominator vanishes impose
/// no constraint.
pub fn weighted_bound(
    weights: &[f64],
    gprime_sqnorms: &[f64],
    num_tasks: usize,
    lipschitz: f64,
) -> Result<StepBound> {
    if weights.len() != gprime_sqnorms.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            found: gprime_sqnorms.len(),
        });
    }
    if num_tasks == 0 {
        return Err(Error::invalid("need at least one task"));
    }
    check_lipschitz(lipschitz)?;
    let tl = num_tasks as f64 * lipschitz;
    let active: Vec<usize> = (0..weights.len())
        .filter(|&i| gprime_sqnorms[i] > 0.0)
        .collect();
    if active.is_empty() {
        return Err(Error::Degenerate(
            "every deconflicted gradient is zero (Pareto stationary)".into(),
        ));
    }
    if let Some(&i) = active.iter().find(|&&i| !(weights[i] > 0.0)) {
        return Err(Error::invalid(format!(
            "weight of task {i} must be positive when its deconflicted gradient is non-zero"
        )));
    }
    let mut t_max = f64::INFINITY;
    for &i in &active {
        let num = 2.0 * weights[i] * gprime_sqnorms[i];
        for j in 0..weights.len() {
            let den = tl * weights[j] * weights[j] * gprime_sqnorms[j];
            if den > 0.0 {
                t_max = t_max.min(num / den);
            }
        }
    }
    Ok(StepBound {
        t_max,
        kind: BoundKind::Weighted,
        num_tasks,
        lipschitz,
    })
}

/// Empirical Lipschitz estimate of a gradient map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzEstimate {
    pub value: f64,
    /// Number of distinct sample pairs that contributed.
    pub pairs: usize,
}

/// `max ‖∇f(x) − ∇f(y)‖ / ‖x − y‖` over all sample pairs, a lower bound on the
/// true constant. Coincident pairs are skipped.
pub fn estimate_lipschitz<F>(grad: F, samples: &[Vec<f64>]) -> Result<LipschitzEstimate>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if samples.len() < 2 {
        return Err(Error::invalid("need at least 2 samples"));
    }
    let grads: Vec<Vec<f64>> = samples.iter().map(|s| grad(s)).collect();
    let mut value = 0.0f64;
    let mut pairs = 0;
    for a in 0..samples.len() {
        for b in (a + 1)..samples.len() {
            let dx = dense::norm(&dense::sub(&samples[a], &samples[b]));
            if dx == 0.0 {
                continue;
            }
            let dg = dense::norm(&dense::sub(&grads[a], &grads[b]));
            value = value.max(dg / dx);
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::invalid("all samples coincide"));
    }
    Ok(LipschitzEstimate { value, pairs })
}
