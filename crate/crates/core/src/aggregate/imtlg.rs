use nalgebra::{DMatrix, DVector};

use crate::deconflict::TaskGradients;
use crate::dense;
use crate::error::{Error, Result};

/// Coefficients and update of the equal-projection combination.
#[derive(Debug, Clone, PartialEq)]
pub struct ImtlgSolution {
    pub coefficients: Vec<f64>,
    pub update: Vec<f64>,
}

/// Finds `G = Σ β_i g_i` with `Σ β_i = 1` and equal projections `G·ĝ_i`
/// onto every unit task direction.
///
/// Zero gradients carry no direction and get `β_i = 0`. The `T×T` system is
/// solved in the least-squares sense so rank-deficient inputs still get an
/// answer; an inconsistent system is reported as degenerate.
pub fn imtlg_aggregate(grads: &TaskGradients) -> Result<ImtlgSolution> {
    let active: Vec<usize> = (0..grads.num_tasks())
        .filter(|&i| dense::norm(grads.row(i)) > 0.0)
        .collect();
    let mut coefficients = vec![0.0; grads.num_tasks()];
    match active.len() {
        0 => return Err(Error::Degenerate("all task gradients are zero".into())),
        1 => {
            coefficients[active[0]] = 1.0;
            return Ok(ImtlgSolution {
                coefficients,
                update: grads.row(active[0]).to_vec(),
            });
        }
        _ => {}
    }

    let k = active.len();
    let units: Vec<Vec<f64>> = active
        .iter()
        .map(|&i| {
            let g = grads.row(i);
            dense::scaled(1.0 / dense::norm(g), g)
        })
        .collect();
    let last = &units[k - 1];
    // rows 0..k-1: G·(û_i − û_last) = 0; last row: Σ β = 1
    let mut a = DMatrix::<f64>::zeros(k, k);
    for r in 0..k - 1 {
        let diff = dense::sub(&units[r], last);
        for (c, &j) in active.iter().enumerate() {
            a[(r, c)] = dense::dot(grads.row(j), &diff);
        }
    }
    for c in 0..k {
        a[(k - 1, c)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(k);
    b[k - 1] = 1.0;

    let max_abs = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let svd = a.clone().svd(true, true);
    let beta = svd
        .solve(&b, 1e-12 * max_abs.max(1.0))
        .map_err(|e| Error::Degenerate(format!("equal-projection system: {e}")))?;
    let residual = (&a * &beta - &b).norm();
    if !residual.is_finite() || residual > 1e-6 {
        return Err(Error::Degenerate(format!(
            "equal-projection system is inconsistent (residual {residual:e})"
        )));
    }
    for (c, &j) in active.iter().enumerate() {
        coefficients[j] = beta[c];
    }
    let update = dense::weighted_sum(grads.rows(), &coefficients, grads.dim());
    Ok(ImtlgSolution {
        coefficients,
        update,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_units_split_evenly() {
        let g = TaskGradients::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = imtlg_aggregate(&g).unwrap();
        assert!((s.update[0] - 0.5).abs() < 1e-14 && (s.update[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn identical_gradients() {
        let g = TaskGradients::new(vec![vec![2.0, -1.0], vec![2.0, -1.0]]).unwrap();
        let s = imtlg_aggregate(&g).unwrap();
        assert!(dense::sub(&s.update, &[2.0, -1.0])
            .iter()
            .all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn unequal_scales_get_equal_projections() {
        let g = TaskGradients::new(vec![vec![10.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = imtlg_aggregate(&g).unwrap();
        let p0 = s.update[0];
        let p1 = s.update[1];
        assert!((p0 - p1).abs() < 1e-12);
        assert!((s.coefficients.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_gradients() {
        let g = TaskGradients::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(imtlg_aggregate(&g), Err(Error::Degenerate(_))));
        let g = TaskGradients::new(vec![vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(imtlg_aggregate(&g).unwrap().update, vec![3.0, 4.0]);
    }
}
