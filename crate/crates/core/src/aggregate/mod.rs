//! Gradient aggregation methods behind one interface.
//!
//! | name      | update                                                    |
//! |-----------|-----------------------------------------------------------|
//! | `gd`      | `Σ g_i`                                                   |
//! | `pcgrad`  | sum of sequentially projected gradients (seeded order)    |
//! | `mgda`    | minimum-norm point of the convex hull (Frank-Wolfe)       |
//! | `imtl-g`  | combination with equal projections on every task          |
//! | `gradops` | `Σ w_i g'_i` over deconflicted gradients, min-norm fallback |

mod imtlg;
mod minnorm;
mod pcgrad;

use serde::{Deserialize, Serialize};

pub use imtlg::{imtlg_aggregate, ImtlgSolution};
pub use minnorm::{minnorm_weights, MinNormSolution, DEFAULT_FW_MAX_ITER, DEFAULT_FW_TOL};
pub use pcgrad::{pcgrad_aggregate, pcgrad_with_orders, random_orders, PcGradOutcome};

use crate::deconflict::{deconflict_all, DeconflictOptions, TaskGradients};
use crate::dense::{self, GsOptions, DEFAULT_GS_TOL};
use crate::error::{Error, Result};
use crate::reweight::{self, RatioVariant, TradeoffWeights, DEFAULT_RATIO_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MethodKind {
    #[serde(rename = "gd")]
    Gd,
    #[serde(rename = "pcgrad")]
    PcGrad,
    #[serde(rename = "mgda")]
    Mgda,
    #[serde(rename = "imtl-g")]
    ImtlG,
    #[serde(rename = "gradops")]
    GradOps,
}

impl MethodKind {
    pub const ALL: [MethodKind; 5] = [
        MethodKind::Gd,
        MethodKind::PcGrad,
        MethodKind::Mgda,
        MethodKind::ImtlG,
        MethodKind::GradOps,
    ];

    /// Stable command-line name.
    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::Gd => "gd",
            MethodKind::PcGrad => "pcgrad",
            MethodKind::Mgda => "mgda",
            MethodKind::ImtlG => "imtl-g",
            MethodKind::GradOps => "gradops",
        }
    }
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }
}

/// Numerical settings shared by the aggregators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub gs_tol: f64,
    pub reorthogonalize: bool,
    pub zero_tol: f64,
    pub ratio_eps: f64,
    pub fw_max_iter: usize,
    pub fw_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let d = DeconflictOptions::default();
        Self {
            gs_tol: DEFAULT_GS_TOL,
            reorthogonalize: false,
            zero_tol: d.zero_tol,
            ratio_eps: DEFAULT_RATIO_EPS,
            fw_max_iter: DEFAULT_FW_MAX_ITER,
            fw_tol: DEFAULT_FW_TOL,
        }
    }
}

impl Tolerances {
    pub fn deconflict_options(&self) -> DeconflictOptions {
        DeconflictOptions {
            gs: GsOptions {
                tol: self.gs_tol,
                reorthogonalize: self.reorthogonalize,
            },
            zero_tol: self.zero_tol,
        }
    }
}

/// Which aggregator to run and its parameters.
///
/// `alpha` and `variant` only matter for `gradops`; `seed` only for `pcgrad`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub kind: MethodKind,
    pub alpha: f64,
    pub variant: RatioVariant,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        Self {
            kind,
            alpha: 0.0,
            variant: RatioVariant::Identity,
            seed: 0,
            tolerances: Tolerances::default(),
        }
    }

    pub fn gradops(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::new(MethodKind::GradOps)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_variant(mut self, variant: RatioVariant) -> Self {
        self.variant = variant;
        self
    }

    /// Short label such as `gradops(alpha=-2)` or `pcgrad`.
    pub fn label(&self) -> String {
        match self.kind {
            MethodKind::GradOps if self.variant == RatioVariant::Exp => {
                format!("gradops(alpha={},exp)", self.alpha)
            }
            MethodKind::GradOps => format!("gradops(alpha={})", self.alpha),
            k => k.to_string(),
        }
    }
}

/// Method-specific detail attached to an update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// `update · g_j` for every original task gradient.
    pub dots: Vec<f64>,
    /// Modified per-task gradients (`pcgrad`, `gradops`).
    pub modified: Option<Vec<Vec<f64>>>,
    /// Conflict flags per task (`gradops`).
    pub conflicted: Option<Vec<bool>>,
    /// Reweighting quantities (`gradops` without fallback).
    pub tradeoff: Option<TradeoffWeights>,
    /// Convex/linear coefficients on the original gradients (`mgda`, `imtl-g`, fallback).
    pub coefficients: Option<Vec<f64>>,
    /// Min-norm solver state (`mgda`, `gradops` fallback).
    pub minnorm: Option<MinNormSolution>,
    /// True when `gradops` fell back to the min-norm direction.
    pub fallback: bool,
}

impl Diagnostics {
    /// Weights applied to the modified gradients, if any.
    pub fn weights(&self) -> Option<&[f64]> {
        self.tradeoff.as_ref().map(|t| t.weights.as_slice())
    }
}

/// The direction handed to the optimizer and how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationResult {
    pub update: Vec<f64>,
    pub diagnostics: Diagnostics,
}

fn finish(
    grads: &TaskGradients,
    update: Vec<f64>,
    mut diagnostics: Diagnostics,
) -> AggregationResult {
    diagnostics.dots = grads
        .rows()
        .iter()
        .map(|g| dense::dot(&update, g))
        .collect();
    AggregationResult {
        update,
        diagnostics,
    }
}

/// Runs the aggregator selected by `spec`.
pub fn aggregate(spec: &MethodSpec, grads: &TaskGradients) -> Result<AggregationResult> {
    let tol = &spec.tolerances;
    match spec.kind {
        MethodKind::Gd => Ok(finish(grads, grads.sum(), Diagnostics::default())),
        MethodKind::PcGrad => {
            let out = pcgrad_aggregate(grads, spec.seed)?;
            let diag = Diagnostics {
                modified: Some(out.modified),
                ..Diagnostics::default()
            };
            Ok(finish(grads, out.update, diag))
        }
        MethodKind::Mgda => {
            let sol = minnorm_weights(grads, tol.fw_max_iter, tol.fw_tol)?;
            let diag = Diagnostics {
                coefficients: Some(sol.weights.clone()),
                ..Diagnostics::default()
            };
            let update = sol.point.clone();
            Ok(finish(
                grads,
                update,
                Diagnostics {
                    minnorm: Some(sol),
                    ..diag
                },
            ))
        }
        MethodKind::ImtlG => {
            let sol = imtlg_aggregate(grads)?;
            let diag = Diagnostics {
                coefficients: Some(sol.coefficients),
                ..Diagnostics::default()
            };
            Ok(finish(grads, sol.update, diag))
        }
        MethodKind::GradOps => gradops_aggregate(grads, spec.alpha, spec.variant, tol),
    }
}

/// Deconflict, reweight and combine; falls back to the min-norm direction
/// when every deconflicted gradient vanishes.
pub fn gradops_aggregate(
    grads: &TaskGradients,
    alpha: f64,
    variant: RatioVariant,
    tol: &Tolerances,
) -> Result<AggregationResult> {
    let out = deconflict_all(grads, &tol.deconflict_options())?;
    if out.all_zero {
        let sol = minnorm_weights(grads, tol.fw_max_iter, tol.fw_tol)?;
        let diag = Diagnostics {
            modified: Some(out.modified),
            conflicted: Some(out.conflicted),
            coefficients: Some(sol.weights.clone()),
            fallback: true,
            ..Diagnostics::default()
        };
        let update = sol.point.clone();
        return Ok(finish(
            grads,
            update,
            Diagnostics {
                minnorm: Some(sol),
                ..diag
            },
        ));
    }
    let tradeoff = reweight::tradeoff_weights(&out.modified, grads, alpha, variant, tol.ratio_eps)?;
    let update = reweight::combine(&out.modified, &tradeoff.weights)?;
    let diag = Diagnostics {
        modified: Some(out.modified),
        conflicted: Some(out.conflicted),
        tradeoff: Some(tradeoff),
        ..Diagnostics::default()
    };
    Ok(finish(grads, update, diag))
}

/// Smallest `update·g_j / (‖update‖·‖g_j‖)` over tasks with non-zero norms
/// (0 when the update is zero).
pub fn worst_alignment(update: &[f64], grads: &TaskGradients) -> f64 {
    let un = dense::norm(update);
    grads
        .rows()
        .iter()
        .filter_map(|g| {
            let gn = dense::norm(g);
            (un > 0.0 && gn > 0.0).then(|| dense::dot(update, g) / (un * gn))
        })
        .fold(0.0f64, f64::min)
}
