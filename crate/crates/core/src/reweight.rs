//! Dominance-based reweighting of deconflicted gradients.
//!
//! `R_i` is the scalar projection of `G' = Σ g'_i` onto the original `g_i`,
//! `r_i = R_i / mean(R)` marks dominating (`r_i > 1`) and dominated tasks, and
//! `w_i = r_i^α / mean(r^α)` shifts the update toward one group or the other.

use serde::{Deserialize, Serialize};

use crate::deconflict::TaskGradients;
use crate::dense;
use crate::error::{Error, Result};

/// Clamp applied to `r_i` before exponentiation.
pub const DEFAULT_RATIO_EPS: f64 = 1e-8;

/// Transform applied to `R_i` before ratio normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioVariant {
    #[default]
    Identity,
    Exp,
}

impl std::str::FromStr for RatioVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "exp" => Ok(Self::Exp),
            other => Err(Error::invalid(format!("unknown ratio variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for RatioVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Identity => "identity",
            Self::Exp => "exp",
        })
    }
}

/// The full set of reweighting quantities for one update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffWeights {
    pub scalar_projections: Vec<f64>,
    pub ratios: Vec<f64>,
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub variant: RatioVariant,
}

/// `R_i = (G'·g_i) / ‖g_i‖`, with `R_i = 0` for a zero gradient.
pub fn scalar_projections(g_prime_sum: &[f64], grads: &TaskGradients) -> Result<Vec<f64>> {
    if g_prime_sum.len() != grads.dim() {
        return Err(Error::DimensionMismatch {
            expected: grads.dim(),
            found: g_prime_sum.len(),
        });
    }
    Ok(grads
        .rows()
        .iter()
        .map(|g| {
            let n = dense::norm(g);
            if n == 0.0 {
                0.0
            } else {
                dense::dot(g_prime_sum, g) / n
            }
        })
        .collect())
}

/// `r_i = t_i / (Σ t / T)` with `t_i = R_i` or `exp(R_i)`.
///
/// The identity variant requires `R_i >= 0`; an all-zero `R` maps to all ones.
pub fn normalize_ratios(r: &[f64], variant: RatioVariant) -> Result<Vec<f64>> {
    if r.is_empty() {
        return Err(Error::invalid("no scalar projections"));
    }
    dense::ensure_finite(r, "scalar projections")?;
    let t = r.len() as f64;
    let transformed: Vec<f64> = match variant {
        RatioVariant::Identity => {
            if let Some(bad) = r.iter().find(|&&x| x < 0.0) {
                return Err(Error::invalid(format!(
                    "identity ratio variant needs non-negative projections, got {bad}"
                )));
            }
            r.to_vec()
        }
        RatioVariant::Exp => {
            // exp(R_i - max R): the ratio is shift invariant and this cannot overflow
            let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            r.iter().map(|&x| (x - max).exp()).collect()
        }
    };
    let total: f64 = transformed.iter().sum();
    if total == 0.0 {
        return Ok(vec![1.0; r.len()]);
    }
    let mean = total / t;
    Ok(transformed.iter().map(|&x| x / mean).collect())
}

/// `w_i = r̃_i^α / (Σ r̃^α / T)` with `r̃_i = max(r_i, eps)`.
pub fn weights(r: &[f64], alpha: f64, eps: f64) -> Result<Vec<f64>> {
    if r.is_empty() {
        return Err(Error::invalid("no ratios"));
    }
    dense::ensure_finite(r, "ratios")?;
    if !alpha.is_finite() {
        return Err(Error::NonFinite("alpha"));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("ratio clamp must be positive"));
    }
    let t = r.len() as f64;
    // log-domain with max shift so large |α| cannot overflow
    let logs: Vec<f64> = r.iter().map(|&x| alpha * x.max(eps).ln()).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = e.iter().sum();
    Ok(e.iter().map(|&x| t * x / total).collect())
}

/// `Σ w_i g'_i`.
pub fn combine(modified: &[Vec<f64>], w: &[f64]) -> Result<Vec<f64>> {
    if modified.is_empty() || modified.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: modified.len(),
            found: w.len(),
        });
    }
    if let Some(bad) = w.iter().find(|&&x| !(x >= 0.0)) {
        return Err(Error::invalid(format!(
            "weights must be non-negative, got {bad}"
        )));
    }
    let dim = modified[0].len();
    for g in modified {
        if g.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: g.len(),
            });
        }
    }
    Ok(dense::weighted_sum(modified, w, dim))
}

/// Runs projections, ratios and weights in sequence.
///
/// `modified` holds the deconflicted gradients; their sum is projected.
/// Scalar projections that are negative only through rounding (at most
/// `1e-8 · Σ‖g_j‖`, the size of the error left in `g'_j` by projection)
/// are clamped to zero for the identity variant.
pub fn tradeoff_weights(
    modified: &[Vec<f64>],
    grads: &TaskGradients,
    alpha: f64,
    variant: RatioVariant,
    eps: f64,
) -> Result<TradeoffWeights> {
    let modified_sum = dense::sum_rows(modified, grads.dim());
    let mut projections = scalar_projections(&modified_sum, grads)?;
    if variant == RatioVariant::Identity {
        let slack = 1e-8 * grads.rows().iter().map(|g| dense::norm(g)).sum::<f64>();
        for p in projections.iter_mut() {
            if *p < 0.0 && *p >= -slack {
                *p = 0.0;
            }
        }
    }
    let ratios = normalize_ratios(&projections, variant)?;
    let w = weights(&ratios, alpha, eps)?;
    Ok(TradeoffWeights {
        scalar_projections: projections,
        ratios,
        weights: w,
        alpha,
        variant,
    })
}
