//! Multi-task gradient aggregation with orthogonal-projection deconfliction.
//!
//! Each task gradient that conflicts with another task is replaced by its
//! component orthogonal to the span of the other task gradients. The
//! resulting gradients never conflict with any original task gradient, and
//! neither does any non-negative combination of them, which is what the
//! dominance-based reweighting in [`reweight`] exploits.
//!
//! Baselines ([`aggregate`]), step-size bounds and Adam ([`optim`]), a 2D
//! benchmark ([`toy2d`]), a small multi-task trainer ([`trainer`]), and
//! cross-method metrics ([`metrics`]) sit on top.

pub mod aggregate;
pub mod deconflict;
pub mod dense;
pub mod error;
pub mod format;
pub mod metrics;
pub mod optim;
pub mod reweight;
pub mod toy2d;
pub mod trainer;

pub use aggregate::{aggregate, AggregationResult, MethodKind, MethodSpec, Tolerances};
pub use deconflict::{
    deconflict_all, deconflict_one, has_conflict, DeconflictOutcome, TaskGradients,
};
pub use error::{Error, Result};
pub use reweight::{RatioVariant, TradeoffWeights};
