//! Two-task synthetic landscape on `R²` with a deep curved valley per task.
//!
//! ```text
//! f1 = ln(max(|5(−θ1−0.7) − tanh(−3θ2)|, 0.0005)) + 1
//! f2 = ln(max(|5(−θ1+0.7) − tanh(−3θ2)|, 0.0005)) + 1
//! q1 = 1.5·tanh(2(−θ1+0.7)²)·(θ1²+1) + (−θ2−0.8)² − 2.5
//! q2 = 1.5·tanh(2(−θ1−0.7)²)·(θ1²+1) + (−θ2−0.8)² − 2.5
//! c1 = max(tanh(5θ2), 0),  c2 = max(tanh(−5θ2), 0)
//! L1 = c1·f1 + c2·q1,  L2 = c1·f2 + c2·q2
//! ```
//!
//! Non-differentiable points use fixed conventions: `d|x|/dx = 0` at `x = 0`,
//! and `max(a, b)` takes the derivative of `a` on ties.

use serde::Serialize;

use crate::aggregate::{aggregate, MethodSpec};
use crate::deconflict::TaskGradients;
use crate::dense;
use crate::error::{Error, Result};
use crate::optim::{AdamHyper, AdamState};

const LOG_FLOOR: f64 = 0.0005;

/// The three starting points used for trajectory comparisons.
pub const PRESET_INITS: [(&str, [f64; 2]); 3] = [
    ("paper1", [-0.85, 0.75]),
    ("paper2", [-0.85, -0.3]),
    ("paper3", [0.9, 0.9]),
];

/// A point `(θ1, θ2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToyPoint(pub [f64; 2]);

impl ToyPoint {
    pub fn new(theta1: f64, theta2: f64) -> Result<Self> {
        if !(theta1.is_finite() && theta2.is_finite()) {
            return Err(Error::NonFinite("toy point"));
        }
        Ok(Self([theta1, theta2]))
    }

    pub fn preset(name: &str) -> Option<Self> {
        PRESET_INITS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, p)| Self(*p))
    }

    pub fn distance(&self, other: &ToyPoint) -> f64 {
        dense::norm(&dense::sub(&self.0, &other.0))
    }
}

impl std::str::FromStr for ToyPoint {
    type Err = Error;

    /// Accepts `x,y` or a preset name.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(p) = ToyPoint::preset(s.trim()) {
            return Ok(p);
        }
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(Error::invalid(format!(
                "initial point `{s}` is neither `x,y` nor one of paper1|paper2|paper3"
            )));
        }
        let parse = |p: &str| {
            p.parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad coordinate `{p}` in `{s}`")))
        };
        ToyPoint::new(parse(parts[0])?, parse(parts[1])?)
    }
}

/// A function value with its gradient.
#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: [f64; 2],
}

fn product(a: Dual, b: Dual) -> Dual {
    Dual {
        v: a.v * b.v,
        d: [a.d[0] * b.v + a.v * b.d[0], a.d[1] * b.v + a.v * b.d[1]],
    }
}

fn sum(a: Dual, b: Dual) -> Dual {
    Dual {
        v: a.v + b.v,
        d: [a.d[0] + b.d[0], a.d[1] + b.d[1]],
    }
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    if c.is_finite() {
        1.0 / (c * c)
    } else {
        0.0
    }
}

/// `ln(max(|5(−θ1 + shift) − tanh(−3θ2)|, floor)) + 1`, with `shift = −0.7` for
/// task 1 and `+0.7` for task 2.
fn log_valley(theta: [f64; 2], shift: f64) -> Dual {
    let [t1, t2] = theta;
    // a = 5(−θ1 + shift) + tanh(3θ2)
    let a = 5.0 * (-t1 + shift) - (-3.0 * t2).tanh();
    let da = [-5.0, 3.0 * sech2(3.0 * t2)];
    let abs = a.abs();
    if abs >= LOG_FLOOR {
        let s = if a > 0.0 {
            1.0
        } else if a < 0.0 {
            -1.0
        } else {
            0.0
        };
        Dual {
            v: abs.ln() + 1.0,
            d: [s * da[0] / abs, s * da[1] / abs],
        }
    } else {
        Dual {
            v: LOG_FLOOR.ln() + 1.0,
            d: [0.0, 0.0],
        }
    }
}

/// `1.5·tanh(2(θ1 − center)²)·(θ1²+1) + (θ2+0.8)² − 2.5`.
fn bowl(theta: [f64; 2], center: f64) -> Dual {
    let [t1, t2] = theta;
    let s = t1 - center;
    let inner = 2.0 * s * s;
    let th = inner.tanh();
    let poly = t1 * t1 + 1.0;
    Dual {
        v: 1.5 * th * poly + (t2 + 0.8).powi(2) - 2.5,
        d: [
            1.5 * sech2(inner) * 4.0 * s * poly + 1.5 * th * 2.0 * t1,
            2.0 * (t2 + 0.8),
        ],
    }
}

/// `max(tanh(k·θ2), 0)`.
fn gate(theta2: f64, k: f64) -> Dual {
    let th = (k * theta2).tanh();
    if th >= 0.0 {
        Dual {
            v: th,
            d: [0.0, k * sech2(k * theta2)],
        }
    } else {
        Dual {
            v: 0.0,
            d: [0.0, 0.0],
        }
    }
}

fn task_losses(theta: [f64; 2]) -> [Dual; 2] {
    let c1 = gate(theta[1], 5.0);
    let c2 = gate(theta[1], -5.0);
    let l1 = sum(
        product(c1, log_valley(theta, -0.7)),
        product(c2, bowl(theta, 0.7)),
    );
    let l2 = sum(
        product(c1, log_valley(theta, 0.7)),
        product(c2, bowl(theta, -0.7)),
    );
    [l1, l2]
}

/// `(L1, L2)` at `theta`.
pub fn toy_losses(theta: &ToyPoint) -> (f64, f64) {
    let [a, b] = task_losses(theta.0);
    (a.v, b.v)
}

/// Analytic `(∇L1, ∇L2)` at `theta`.
pub fn toy_grads(theta: &ToyPoint) -> ([f64; 2], [f64; 2]) {
    let [a, b] = task_losses(theta.0);
    (a.d, b.d)
}

/// `min_{γ∈[0,1]} ‖γ g1 + (1−γ) g2‖`.
pub fn stationarity_residual(g1: &[f64], g2: &[f64]) -> Result<f64> {
    if g1.len() != g2.len() {
        return Err(Error::DimensionMismatch {
            expected: g1.len(),
            found: g2.len(),
        });
    }
    dense::ensure_finite(g1, "residual input")?;
    dense::ensure_finite(g2, "residual input")?;
    let diff = dense::sub(g1, g2);
    let dd = dense::sq_norm(&diff);
    let gamma = if dd == 0.0 {
        0.0
    } else {
        (-dense::dot(g2, &diff) / dd).clamp(0.0, 1.0)
    };
    let mut p = g2.to_vec();
    dense::axpy(gamma, &diff, &mut p);
    Ok(dense::norm(&p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStep {
    pub step: usize,
    pub theta: [f64; 2],
    pub loss1: f64,
    pub loss2: f64,
    pub g1: [f64; 2],
    pub g2: [f64; 2],
    pub update: [f64; 2],
    pub residual: f64,
}

/// Every step of one optimization run. Each entry describes the state
/// before its update was applied; a final entry (with zero update) records
/// the terminal point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub method: MethodSpec,
    pub init: ToyPoint,
    pub lr: f64,
    pub steps: Vec<TrajectoryStep>,
    /// Set when the run stopped early on a non-finite value.
    pub diverged: Option<String>,
}

impl TrajectoryRecord {
    pub fn terminal(&self) -> &TrajectoryStep {
        self.steps
            .last()
            .expect("trajectory has at least one entry")
    }

    pub fn terminal_point(&self) -> ToyPoint {
        ToyPoint(self.terminal().theta)
    }

    pub fn terminal_residual(&self) -> f64 {
        self.terminal().residual
    }
}

fn record_at(step: usize, theta: [f64; 2]) -> Result<TrajectoryStep> {
    let p = ToyPoint(theta);
    let (loss1, loss2) = toy_losses(&p);
    let (g1, g2) = toy_grads(&p);
    let residual = stationarity_residual(&g1, &g2)?;
    Ok(TrajectoryStep {
        step,
        theta,
        loss1,
        loss2,
        g1,
        g2,
        update: [0.0; 2],
        residual,
    })
}

/// Runs `steps` Adam updates on the aggregated direction.
pub fn run_trajectory(
    spec: &MethodSpec,
    init: ToyPoint,
    steps: usize,
    lr: f64,
) -> Result<TrajectoryRecord> {
    run_trajectory_with(spec, init, steps, AdamHyper::with_lr(lr))
}

/// [`run_trajectory`] with every Adam hyperparameter given.
pub fn run_trajectory_with(
    spec: &MethodSpec,
    init: ToyPoint,
    steps: usize,
    hyper: AdamHyper,
) -> Result<TrajectoryRecord> {
    if steps == 0 {
        return Err(Error::invalid("steps must be at least 1"));
    }
    let lr = hyper.lr;
    let mut adam = AdamState::new(2, hyper)?;
    let mut theta = init.0;
    let mut out = Vec::with_capacity(steps + 1);
    let mut diverged = None;
    for k in 0..steps {
        let mut entry = record_at(k, theta)?;
        if !(entry.loss1.is_finite() && entry.loss2.is_finite()) {
            diverged = Some(format!("non-finite loss at step {k}"));
            out.push(entry);
            break;
        }
        let grads = TaskGradients::new(vec![entry.g1.to_vec(), entry.g2.to_vec()])?;
        let agg = aggregate(spec, &grads)?;
        entry.update = [agg.update[0], agg.update[1]];
        out.push(entry);
        adam.step(&mut theta, &agg.update)?;
        if !(theta[0].is_finite() && theta[1].is_finite()) {
            diverged = Some(format!("non-finite parameters after step {k}"));
            break;
        }
    }
    if diverged.is_none() {
        out.push(record_at(steps, theta)?);
    }
    Ok(TrajectoryRecord {
        method: *spec,
        init,
        lr,
        steps: out,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::MethodKind;

    #[test]
    fn losses_vanish_on_the_axis() {
        for t1 in [-1.5, -0.2, 0.0, 0.4, 1.9] {
            let p = ToyPoint::new(t1, 0.0).unwrap();
            assert_eq!(toy_losses(&p), (0.0, 0.0));
            let (g1, g2) = toy_grads(&p);
            assert_eq!(g1[0], 0.0);
            assert_eq!(g2[0], 0.0);
        }
    }

    #[test]
    fn first_init_is_asymmetric() {
        let (l1, l2) = toy_losses(&ToyPoint::new(-0.85, 0.75).unwrap());
        assert!(l1.is_finite() && l2.is_finite());
        assert!(l1 != l2);
    }

    #[test]
    fn mirror_symmetry() {
        // lower half plane: only the bowls are active and they mirror in θ1
        for &(a, b) in &[(0.5, -0.6), (1.7, -1.2), (-0.3, -0.05)] {
            let (l1, _) = toy_losses(&ToyPoint::new(a, b).unwrap());
            let (_, l2) = toy_losses(&ToyPoint::new(-a, b).unwrap());
            assert!((l1 - l2).abs() < 1e-12);
        }
        // the valleys mirror through the origin (tanh is odd)
        for &(a, b) in &[(0.3, 0.4), (-1.1, 0.9), (0.6, -0.2)] {
            let f1 = log_valley([a, b], -0.7).v;
            let f2 = log_valley([-a, -b], 0.7).v;
            assert!((f1 - f2).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_examples() {
        assert_eq!(
            stationarity_residual(&[1.0, -2.0], &[-1.0, 2.0]).unwrap(),
            0.0
        );
        assert_eq!(
            stationarity_residual(&[1.0, 0.0], &[1.0, 0.0]).unwrap(),
            1.0
        );
        let r = stationarity_residual(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((r - 0.5f64.sqrt()).abs() < 1e-15);
        // one gradient inside: hull minimum at the shorter vertex
        let r = stationarity_residual(&[1.0, 0.0], &[3.0, 1.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn init_parsing() {
        assert_eq!("paper2".parse::<ToyPoint>().unwrap().0, [-0.85, -0.3]);
        assert_eq!("0.5, -1".parse::<ToyPoint>().unwrap().0, [0.5, -1.0]);
        assert!("paper9".parse::<ToyPoint>().is_err());
        assert!("1,2,3".parse::<ToyPoint>().is_err());
        assert!("a,1".parse::<ToyPoint>().is_err());
    }

    #[test]
    fn trajectory_shape_and_determinism() {
        let spec = MethodSpec::gradops(-1.0);
        let init = ToyPoint::preset("paper1").unwrap();
        let a = run_trajectory(&spec, init, 50, 1e-3).unwrap();
        let b = run_trajectory(&spec, init, 50, 1e-3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps.len(), 51);
        assert!(a.steps.iter().enumerate().all(|(i, s)| s.step == i));
        assert_eq!(a.steps[0].theta, init.0);
        assert!(run_trajectory(&MethodSpec::new(MethodKind::Gd), init, 0, 1e-3).is_err());
    }
}
