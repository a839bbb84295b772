//! Small dense linear algebra: Cholesky factorization, triangular solves and
//! a pivoted Gaussian solver for tiny systems.
//!
//! Correlation matrices here run to a few thousand rows at most, so a
//! cache-friendly row-major factorization beats pulling in a LAPACK binding.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::Scalar;

/// Dot product with four independent accumulators so the loop vectorizes.
/// Summation order is fixed, keeping results reproducible run-to-run.
#[inline]
pub fn sdot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (F::zero(), F::zero(), F::zero(), F::zero());
    for k in 0..chunks {
        let i = 4 * k;
        s0 = s0 + a[i] * b[i];
        s1 = s1 + a[i + 1] * b[i + 1];
        s2 = s2 + a[i + 2] * b[i + 2];
        s3 = s3 + a[i + 3] * b[i + 3];
    }
    let mut tail = F::zero();
    for i in 4 * chunks..n {
        tail = tail + a[i] * b[i];
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix,
/// stored row-major.
#[derive(Debug, Clone)]
pub struct CholeskyFactor<F> {
    n: usize,
    l: Vec<F>,
}

/// Failure during factorization: the pivot that went non-positive, plus a
/// rough condition estimate from the diagonal reached so far.
#[derive(Debug, Clone, Copy)]
pub struct FactorFailure {
    pub pivot_index: usize,
    pub cond_estimate: f64,
}

impl<F: Scalar> CholeskyFactor<F> {
    /// Factor `a = L L^T`. `a` must be symmetric; only the lower triangle is
    /// read.
    pub fn factor(a: &ArrayView2<'_, F>) -> std::result::Result<Self, FactorFailure> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "matrix must be square");
        let mut l = vec![F::zero(); n * n];
        let mut max_diag = F::zero();
        let mut min_pivot = F::infinity();
        for i in 0..n {
            for j in 0..=i {
                let dot = if i == j {
                    let row = &l[i * n..i * n + i];
                    sdot(row, row)
                } else {
                    sdot(&l[i * n..i * n + j], &l[j * n..j * n + j])
                };
                let s = a[[i, j]] - dot;
                if i == j {
                    if !(s > F::zero()) || !s.is_finite() {
                        let cond = if min_pivot.is_finite() && min_pivot > F::zero() {
                            (max_diag / (min_pivot * min_pivot)).to_f64().unwrap_or(f64::INFINITY)
                        } else {
                            f64::INFINITY
                        };
                        return Err(FactorFailure {
                            pivot_index: i,
                            cond_estimate: cond,
                        });
                    }
                    let p = s.sqrt();
                    l[i * n + i] = p;
                    max_diag = max_diag.max(a[[i, i]]);
                    min_pivot = min_pivot.min(p);
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(CholeskyFactor { n, l })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Entry of the lower-triangular factor (zero above the diagonal).
    pub fn entry(&self, i: usize, j: usize) -> F {
        self.at(i, j)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> F {
        self.l[i * self.n + j]
    }

    /// log det(A) = 2 Σ log L_ii.
    pub fn logdet(&self) -> F {
        let mut s = F::zero();
        for i in 0..self.n {
            s = s + self.at(i, i).ln();
        }
        s + s
    }

    /// Ratio-of-pivots condition estimate, (max L_ii / min L_ii)^2.
    pub fn cond_estimate(&self) -> f64 {
        let mut lo = F::infinity();
        let mut hi = F::zero();
        for i in 0..self.n {
            let d = self.at(i, i);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let r = hi / lo;
        (r * r).to_f64().unwrap_or(f64::INFINITY)
    }

    /// Solve `A x = b` via forward and backward substitution.
    pub fn solve_vec(&self, b: &ArrayView1<'_, F>) -> Array1<F> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<F> = b.iter().copied().collect();
        // L y = b
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s = sdot(row, &x[..i]);
            x[i] = (x[i] - s) / self.at(i, i);
        }
        // L^T x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s = s - self.at(j, i) * x[j];
            }
            x[i] = s / self.at(i, i);
        }
        Array1::from_vec(x)
    }

    /// Forward substitution only: solve `L y = b`. `‖y‖² = bᵀA⁻¹b`.
    pub fn solve_lower(&self, b: &ArrayView1<'_, F>) -> Array1<F> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y: Vec<F> = b.iter().copied().collect();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s = sdot(row, &y[..i]);
            y[i] = (y[i] - s) / self.at(i, i);
        }
        Array1::from_vec(y)
    }

    /// Dense inverse of the factored matrix, used by the likelihood gradient
    /// where the full trace is needed anyway.
    pub fn inverse(&self) -> Array2<F> {
        let n = self.n;
        let mut inv = Array2::zeros((n, n));
        let mut e = Array1::zeros(n);
        for j in 0..n {
            e[j] = F::one();
            let col = self.solve_vec(&e.view());
            inv.column_mut(j).assign(&col);
            e[j] = F::zero();
        }
        inv
    }
}

/// Solve a small dense system by Gaussian elimination with partial pivoting.
/// Returns the solution and a pivot-ratio condition estimate.
pub fn solve_small<F: Scalar>(a: &ArrayView2<'_, F>, b: &ArrayView1<'_, F>) -> Result<(Array1<F>, f64)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert_eq!(n, b.len());
    let mut m = a.to_owned();
    let mut x = b.to_owned();
    let mut max_pivot = F::zero();
    let mut min_pivot = F::infinity();
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if m[[i, k]].abs() > m[[p, k]].abs() {
                p = i;
            }
        }
        if p != k {
            for j in 0..n {
                let t = m[[k, j]];
                m[[k, j]] = m[[p, j]];
                m[[p, j]] = t;
            }
            let t = x[k];
            x[k] = x[p];
            x[p] = t;
        }
        let piv = m[[k, k]];
        let apiv = piv.abs();
        max_pivot = max_pivot.max(apiv);
        min_pivot = min_pivot.min(apiv);
        if apiv.to_f64().unwrap_or(0.0) == 0.0 {
            return Err(Error::NumericalBreakdown(format!(
                "zero pivot at column {k} in dense solve"
            )));
        }
        for i in k + 1..n {
            let f = m[[i, k]] / piv;
            if f == F::zero() {
                continue;
            }
            for j in k..n {
                let mkj = m[[k, j]];
                m[[i, j]] = m[[i, j]] - f * mkj;
            }
            x[i] = x[i] - f * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s = s - m[[i, j]] * x[j];
        }
        x[i] = s / m[[i, i]];
    }
    let cond = (max_pivot / min_pivot).to_f64().unwrap_or(f64::INFINITY);
    Ok((x, cond))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_reconstructs_spd_matrix() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.5], [0.6, 1.5, 3.0f64]];
        let f = CholeskyFactor::factor(&a.view()).unwrap();
        for i in 0..3 {
            for j in 0..=i {
                let mut r = 0.0;
                for k in 0..=j {
                    r += f.at(i, k) * f.at(j, k);
                }
                assert!((r - a[[i, j]]).abs() < 1e-12, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn solve_matches_hand_inverse() {
        let a = array![[4.0, 1.0], [1.0, 3.0f64]];
        let b = array![1.0, 2.0f64];
        let f = CholeskyFactor::factor(&a.view()).unwrap();
        let x = f.solve_vec(&b.view());
        // inverse of [[4,1],[1,3]] is 1/11 [[3,-1],[-1,4]]
        assert!((x[0] - (3.0 - 2.0) / 11.0).abs() < 1e-14);
        assert!((x[1] - (-1.0 + 8.0) / 11.0).abs() < 1e-14);
    }

    #[test]
    fn logdet_matches_direct_determinant() {
        let a = array![[4.0, 2.0], [2.0, 5.0f64]];
        let f = CholeskyFactor::factor(&a.view()).unwrap();
        let det: f64 = 4.0 * 5.0 - 2.0 * 2.0;
        assert!((f.logdet() - det.ln()).abs() < 1e-12);
    }

    #[test]
    fn factor_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0f64]];
        assert!(CholeskyFactor::factor(&a.view()).is_err());
    }

    #[test]
    fn small_solver_pivots() {
        let a = array![[0.0, 1.0], [1.0, 0.0f64]];
        let b = array![2.0, 3.0f64];
        let (x, _) = solve_small(&a.view(), &b.view()).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-14);
        assert!((x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sdot_matches_naive() {
        let a: Vec<f64> = (0..13).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..13).map(|i| 1.0 - i as f64 * 0.1).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((sdot(&a, &b) - naive).abs() < 1e-12);
    }
}
