use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::deconflict::TaskGradients;
use crate::dense;
use crate::error::Result;

pub const DEFAULT_FW_MAX_ITER: usize = 250;
pub const DEFAULT_FW_TOL: f64 = 1e-7;

/// Points with `‖p‖ ≤ POINT_ZERO_TOL · max_i ‖g_i‖` are returned as exactly zero.
pub const POINT_ZERO_TOL: f64 = 1e-12;

/// Minimum-norm point of the convex hull of the task gradients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinNormSolution {
    /// Convex coefficients γ (non-negative, summing to one).
    pub weights: Vec<f64>,
    /// `Σ γ_i g_i`.
    pub point: Vec<f64>,
    pub iterations: usize,
    /// False when `max_iter` ran out before the gap dropped below `tol`.
    pub converged: bool,
}

/// Frank-Wolfe over the simplex for `min_γ ‖Σ γ_i g_i‖²`.
///
/// Starts from uniform weights; each iteration moves toward the vertex with
/// the smallest inner product against the current point using an exact line
/// search. Stops when the duality gap `‖v‖² − v·g_t` is at most
/// `tol · max_i ‖g_i‖²`.
///
/// The Frank-Wolfe support is then polished by an active-set pass that solves
/// the affine least-squares problem on the support exactly, so solutions at
/// or near the origin are not left at Frank-Wolfe's sublinear accuracy. A
/// point within [`POINT_ZERO_TOL`] of the origin is reported as zero.
pub fn minnorm_weights(
    grads: &TaskGradients,
    max_iter: usize,
    tol: f64,
) -> Result<MinNormSolution> {
    let t = grads.num_tasks();
    let gram = grads.gram();
    let scale = (0..t).map(|i| gram[i][i]).fold(0.0, f64::max);

    let mut gamma = vec![1.0 / t as f64; t];
    let mut iterations = 0;
    let mut converged = scale == 0.0;

    while !converged && iterations < max_iter {
        let m_gamma: Vec<f64> = gram.iter().map(|row| dense::dot(row, &gamma)).collect();
        let vv = dense::dot(&gamma, &m_gamma);
        let (best, vt) =
            m_gamma
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (i, x)| if x < acc.1 { (i, x) } else { acc },
                );
        let gap = vv - vt;
        if gap <= tol * scale {
            converged = true;
            break;
        }
        let tt = gram[best][best];
        let denom = vv - 2.0 * vt + tt;
        let step = if denom > 0.0 {
            ((vv - vt) / denom).clamp(0.0, 1.0)
        } else {
            0.0
        };
        if step == 0.0 {
            converged = true;
            break;
        }
        for g in gamma.iter_mut() {
            *g *= 1.0 - step;
        }
        gamma[best] += step;
        iterations += 1;
    }

    if scale > 0.0 {
        if let Some(polished) = polish(grads, &gram, &gamma, scale) {
            gamma = polished;
            converged = true;
        }
    }
    let mut point = dense::weighted_sum(grads.rows(), &gamma, grads.dim());
    if dense::norm(&point) <= POINT_ZERO_TOL * scale.sqrt() {
        point.iter_mut().for_each(|x| *x = 0.0);
    }
    Ok(MinNormSolution {
        weights: gamma,
        point,
        iterations,
        converged,
    })
}

/// `argmin ‖Σ_{i∈S} γ_i g_i‖` subject to `Σ γ_i = 1`, ignoring signs.
fn affine_min(grads: &TaskGradients, support: &[usize]) -> Option<Vec<f64>> {
    let k = support.len();
    if k == 1 {
        return Some(vec![1.0]);
    }
    let last = grads.row(support[k - 1]);
    let d = grads.dim();
    let a = DMatrix::from_fn(d, k - 1, |r, c| grads.row(support[c])[r] - last[r]);
    let b = DVector::from_iterator(d, last.iter().map(|x| -x));
    let svd = a.svd(true, true);
    let cutoff = 1e-12 * svd.singular_values.max();
    let c = svd.solve(&b, cutoff).ok()?;
    let mut coeffs: Vec<f64> = c.iter().copied().collect();
    coeffs.push(1.0 - coeffs.iter().sum::<f64>());
    coeffs.iter().all(|x| x.is_finite()).then_some(coeffs)
}

/// Active-set refinement from the Frank-Wolfe support. Returns weights that
/// satisfy `g_j·p ≥ ‖p‖²` for every task up to rounding, or `None`.
fn polish(grads: &TaskGradients, gram: &[Vec<f64>], gamma: &[f64], scale: f64) -> Option<Vec<f64>> {
    let t = gamma.len();
    let top = gamma.iter().copied().fold(0.0, f64::max);
    let mut support: Vec<usize> = (0..t).filter(|&i| gamma[i] > 1e-6 * top).collect();
    for _ in 0..4 * t {
        let coeffs = affine_min(grads, &support)?;
        let (worst, min_c) =
            coeffs
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (i, x)| if x < acc.1 { (i, x) } else { acc },
                );
        if min_c < -1e-12 {
            support.remove(worst);
            continue;
        }
        let mut full = vec![0.0; t];
        for (&i, &c) in support.iter().zip(&coeffs) {
            full[i] = c.max(0.0);
        }
        let total: f64 = full.iter().sum();
        full.iter_mut().for_each(|x| *x /= total);

        let m_gamma: Vec<f64> = gram.iter().map(|row| dense::dot(row, &full)).collect();
        let pp = dense::dot(&full, &m_gamma);
        let (j, vj) =
            m_gamma
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (i, x)| if x < acc.1 { (i, x) } else { acc },
                );
        if vj >= pp - 1e-12 * scale {
            return Some(full);
        }
        if support.contains(&j) {
            return None;
        }
        support.push(j);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tg(rows: &[&[f64]]) -> TaskGradients {
        TaskGradients::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn orthogonal_units() {
        let s = minnorm_weights(&tg(&[&[1.0, 0.0], &[0.0, 1.0]]), 250, 1e-7).unwrap();
        for (w, p) in s.weights.iter().zip(&s.point) {
            assert!((w - 0.5).abs() < 1e-15 && (p - 0.5).abs() < 1e-15);
        }
        assert!(s.converged);
    }

    #[test]
    fn antipodal_pair_reaches_origin() {
        let s = minnorm_weights(&tg(&[&[1.0, 0.0], &[-1.0, 0.0]]), 250, 1e-7).unwrap();
        assert_eq!(s.weights, vec![0.5, 0.5]);
        assert_eq!(s.point, vec![0.0, 0.0]);
    }

    #[test]
    fn unequal_antipodal_pair() {
        let s = minnorm_weights(&tg(&[&[1.0, 0.0], &[-2.0, 0.0]]), 250, 1e-7).unwrap();
        assert!((s.weights[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!(dense::norm(&s.point) < 1e-12);
    }

    #[test]
    fn vertex_solution_when_one_gradient_is_inside() {
        // (1,1) has the smaller norm and (2,3)·(1,1) > ‖(1,1)‖², so γ = (1, 0)
        let s = minnorm_weights(&tg(&[&[1.0, 1.0], &[2.0, 3.0]]), 250, 1e-7).unwrap();
        assert!((s.weights[0] - 1.0).abs() < 1e-12);
        assert!(dense::sub(&s.point, &[1.0, 1.0])
            .iter()
            .all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn all_zero_is_trivially_converged() {
        let s = minnorm_weights(&tg(&[&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]]), 250, 1e-7).unwrap();
        assert!(s.converged);
        assert_eq!(s.point, vec![0.0, 0.0]);
    }

    #[test]
    fn polish_finishes_a_truncated_run() {
        let g = tg(&[
            &[1.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0],
            &[0.0, 0.0, 1.0],
            &[-0.3, -0.2, 0.1],
        ]);
        let s = minnorm_weights(&g, 1, 1e-15).unwrap();
        assert!(s.converged);
        assert_eq!(s.iterations, 1);
        let total: f64 = s.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(s.weights.iter().all(|&w| w >= 0.0));
        let pp = dense::sq_norm(&s.point);
        for r in g.rows() {
            assert!(dense::dot(r, &s.point) >= pp - 1e-12);
        }
    }

    #[test]
    fn origin_inside_the_hull_gives_an_exact_zero() {
        // three directions 120° apart, scaled unevenly
        let g = tg(&[
            &[1.0, 0.0],
            &[-0.5, 0.866_025_403_784_438_6],
            &[-1.0, -1.732_050_807_568_877_2],
        ]);
        let s = minnorm_weights(&g, 250, 1e-7).unwrap();
        assert_eq!(s.point, vec![0.0, 0.0]);
        assert!(s.weights.iter().all(|&w| w > 0.0));
    }
}
