//! Dense `f64` vector kernels.
//!
//! Vectors are plain slices. Every routine is a pure function of its inputs
//! and evaluates sums in index order, so identical inputs give bit-identical
//! outputs.

use crate::error::{Error, Result};

/// Default relative tolerance for dropping dependent Gram-Schmidt candidates.
pub const DEFAULT_GS_TOL: f64 = 1e-10;

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// Returns an error if any entry is NaN or infinite.
pub fn ensure_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Inner product. Callers must pass equal lengths; see [`try_dot`].
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn try_dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    Ok(dot(a, b))
}

#[inline]
pub fn sq_norm(v: &[f64]) -> f64 {
    dot(v, v)
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    sq_norm(v).sqrt()
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn scaled(a: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| a * v).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Σ rows, accumulated in row order.
pub fn sum_rows<R: AsRef<[f64]>>(rows: &[R], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for r in rows {
        axpy(1.0, r.as_ref(), &mut out);
    }
    out
}

/// Σ w_i · rows_i, accumulated in row order.
pub fn weighted_sum<R: AsRef<[f64]>>(rows: &[R], weights: &[f64], dim: usize) -> Vec<f64> {
    debug_assert_eq!(rows.len(), weights.len());
    let mut out = vec![0.0; dim];
    for (r, &w) in rows.iter().zip(weights) {
        axpy(w, r.as_ref(), &mut out);
    }
    out
}

/// Projection of `v` onto the line spanned by `u`: `(u·v / ‖u‖²) u`.
///
/// Fails with [`Error::DegenerateDirection`] when `‖u‖ <= tol`.
pub fn proj(u: &[f64], v: &[f64], tol: f64) -> Result<Vec<f64>> {
    check_dims(u, v)?;
    let uu = sq_norm(u);
    let n = uu.sqrt();
    if n <= tol || uu == 0.0 {
        return Err(Error::DegenerateDirection { norm: n, tol });
    }
    Ok(scaled(dot(u, v) / uu, u))
}

/// Options for [`gram_schmidt_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsOptions {
    /// A candidate is dropped when its orthogonalized norm is at most
    /// `tol * ‖original‖`.
    pub tol: f64,
    /// Run a second classical pass over each candidate.
    pub reorthogonalize: bool,
}

impl Default for GsOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_GS_TOL,
            reorthogonalize: false,
        }
    }
}

/// An orthogonal (not normalized) basis built by [`gram_schmidt`].
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    vectors: Vec<Vec<f64>>,
    sq_norms: Vec<f64>,
    dim: usize,
    tol: f64,
}

impl Basis {
    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Σ_j proj_{u_j}(v), the orthogonal projection of `v` onto the span.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, v)?;
        let mut out = vec![0.0; self.dim];
        for (u, &uu) in self.vectors.iter().zip(&self.sq_norms) {
            axpy(dot(u, v) / uu, u, &mut out);
        }
        Ok(out)
    }

    /// `v − Σ_j proj_{u_j}(v)`: the component of `v` orthogonal to the span.
    pub fn residual(&self, v: &[f64]) -> Result<Vec<f64>> {
        let p = self.project(v)?;
        Ok(sub(v, &p))
    }
}

fn check_len(dim: usize, v: &[f64]) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: v.len(),
        });
    }
    Ok(())
}

/// Classical Gram-Schmidt in input order with the default options.
pub fn gram_schmidt<R: AsRef<[f64]>>(vectors: &[R], tol: f64) -> Result<Basis> {
    gram_schmidt_with(
        vectors,
        GsOptions {
            tol,
            ..GsOptions::default()
        },
    )
}

/// Classical Gram-Schmidt: each candidate has its projections onto the
/// already accepted directions removed (all coefficients computed against the
/// candidate itself), and is dropped if what remains is at most
/// `tol · ‖candidate‖`.
pub fn gram_schmidt_with<R: AsRef<[f64]>>(vectors: &[R], opts: GsOptions) -> Result<Basis> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::invalid("gram_schmidt needs at least one vector"))?;
    let dim = first.as_ref().len();
    if dim == 0 {
        return Err(Error::invalid("vectors must have dimension >= 1"));
    }
    if !(opts.tol >= 0.0) {
        return Err(Error::invalid("tolerance must be non-negative"));
    }
    let mut basis = Basis {
        vectors: Vec::new(),
        sq_norms: Vec::new(),
        dim,
        tol: opts.tol,
    };
    for v in vectors {
        let v = v.as_ref();
        check_len(dim, v)?;
        ensure_finite(v, "gram_schmidt input")?;
        let original = norm(v);
        let mut u = basis.residual(v)?;
        if opts.reorthogonalize {
            u = basis.residual(&u)?;
        }
        let n = norm(&u);
        if n <= opts.tol * original || n == 0.0 {
            continue;
        }
        basis.sq_norms.push(n * n);
        basis.vectors.push(u);
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(dot(&[1.0, 2.0], &[3.0, 4.0]), 11.0);
        assert_eq!(sq_norm(&[3.0, 4.0]), 25.0);
        assert!(matches!(
            try_dot(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn proj_examples() {
        assert_eq!(
            proj(&[1.0, 0.0], &[3.0, 4.0], 1e-12).unwrap(),
            vec![3.0, 0.0]
        );
        assert_eq!(
            proj(&[1.0, 1.0], &[2.0, 0.0], 1e-12).unwrap(),
            vec![1.0, 1.0]
        );
        let v = [0.3, -1.7, 2.5];
        let p = proj(&v, &v, 1e-12).unwrap();
        for (a, b) in p.iter().zip(&v) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn proj_rejects_near_zero_direction() {
        assert!(matches!(
            proj(&[1e-14, 0.0], &[1.0, 1.0], 1e-12),
            Err(Error::DegenerateDirection { .. })
        ));
        assert!(matches!(
            proj(&[0.0, 0.0], &[1.0, 1.0], 0.0),
            Err(Error::DegenerateDirection { .. })
        ));
    }

    #[test]
    fn gram_schmidt_examples() {
        let b = gram_schmidt(&[vec![1.0, 0.0], vec![0.0, 2.0]], DEFAULT_GS_TOL).unwrap();
        assert_eq!(b.vectors(), &[vec![1.0, 0.0], vec![0.0, 2.0]]);

        let b = gram_schmidt(&[vec![1.0, 0.0], vec![1.0, 1.0]], DEFAULT_GS_TOL).unwrap();
        assert_eq!(b.vectors(), &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(dot(&b.vectors()[0], &b.vectors()[1]), 0.0);

        let b = gram_schmidt(&[vec![1.0, 0.0], vec![2.0, 0.0]], DEFAULT_GS_TOL).unwrap();
        assert_eq!(b.vectors(), &[vec![1.0, 0.0]]);
    }

    #[test]
    fn gram_schmidt_all_dependent_is_empty() {
        let b = gram_schmidt(&[vec![0.0, 0.0], vec![0.0, 0.0]], DEFAULT_GS_TOL).unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn gram_schmidt_validates_input() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(gram_schmidt(&empty, 1e-10).is_err());
        assert!(gram_schmidt(&[vec![1.0], vec![1.0, 2.0]], 1e-10).is_err());
        assert!(matches!(
            gram_schmidt(&[vec![f64::NAN, 1.0]], 1e-10),
            Err(Error::NonFinite(_))
        ));
    }

    fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, d)
    }

    proptest! {
        #[test]
        fn proj_residual_is_orthogonal(
            (u, v) in (1usize..=100).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d)))
        ) {
            prop_assume!(norm(&u) > 1e-6);
            let p = proj(&u, &v, 1e-12).unwrap();
            let r = sub(&v, &p);
            prop_assert!(dot(&r, &u).abs() <= 1e-9 * norm(&u) * norm(&v) + 1e-300);
        }

        #[test]
        fn gram_schmidt_orthogonal_and_spanning(
            (d, vs) in (1usize..=12).prop_flat_map(|d| {
                (Just(d), prop::collection::vec(vec_strategy(d), 1..=(d + 3)))
            })
        ) {
            let b = gram_schmidt(&vs, DEFAULT_GS_TOL).unwrap();
            prop_assert!(b.len() <= d);
            let u = b.vectors();
            for i in 0..u.len() {
                for j in (i + 1)..u.len() {
                    prop_assert!(dot(&u[i], &u[j]).abs() <= 1e-8 * norm(&u[i]) * norm(&u[j]));
                }
            }
            for v in &vs {
                let r = b.residual(v).unwrap();
                prop_assert!(norm(&r) <= 1e-7 * norm(v) + 1e-300);
            }
            // determinism
            let again = gram_schmidt(&vs, DEFAULT_GS_TOL).unwrap();
            prop_assert_eq!(b, again);
        }
    }
}
