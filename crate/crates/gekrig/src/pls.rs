//! Partial least squares decomposition (single response).
//!
//! Produces the weight vectors, loadings and rotation coefficients that the
//! projected kernels consume. Inputs are centered to zero mean before the
//! decomposition; columns are not scaled to unit variance because the
//! coefficient magnitudes feed kernel length-scales directly.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_small;
use crate::Scalar;

/// Result of a PLS fit with `h` components.
///
/// Columns of `weights` have unit norm, score columns are pairwise
/// orthogonal, and `rotations = W (PᵀW)⁻¹` expresses the components directly
/// in the original coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlsDecomposition<F> {
    /// W, d×h.
    pub weights: Array2<F>,
    /// P, d×h; column `l` holds the regression of X onto score `l`.
    pub loadings: Array2<F>,
    /// W★ = W (PᵀW)⁻¹, d×h.
    pub rotations: Array2<F>,
    /// Scores t, n×h.
    pub scores: Array2<F>,
    /// Inner-regression coefficients of the response on each score.
    pub response_loadings: Vec<F>,
    pub h: usize,
    /// Column means subtracted from X.
    pub x_mean: Array1<F>,
    /// Mean subtracted from y.
    pub y_mean: F,
}

impl<F: Scalar> PlsDecomposition<F> {
    /// Linear-model coefficients in original (centered) coordinates,
    /// `b = W★ c`; the inner model predicts `ȳ + (x − x̄)ᵀ b`.
    pub fn regression_coefficients(&self) -> Array1<F> {
        let mut b = Array1::zeros(self.rotations.nrows());
        for l in 0..self.h {
            let c = self.response_loadings[l];
            for i in 0..b.len() {
                b[i] = b[i] + self.rotations[[i, l]] * c;
            }
        }
        b
    }

    pub fn predict_inner(&self, x: &ArrayView1<'_, F>) -> F {
        let b = self.regression_coefficients();
        let mut s = self.y_mean;
        for i in 0..b.len() {
            s = s + (x[i] - self.x_mean[i]) * b[i];
        }
        s
    }
}

/// Fit a PLS1 decomposition with `h` components by iterative deflation.
///
/// Each weight vector is the normalized covariance direction of the current
/// residuals, which is the closed-form maximizer of the squared covariance
/// for a single response. Sign is canonicalized so the first nonzero weight
/// entry is nonnegative.
pub fn fit_pls<F: Scalar>(x: &ArrayView2<'_, F>, y: &ArrayView1<'_, F>, h: usize) -> Result<PlsDecomposition<F>> {
    let n = x.nrows();
    let d = x.ncols();
    if n != y.len() {
        return Err(Error::invalid(format!(
            "X has {n} rows but y has {} entries",
            y.len()
        )));
    }
    if n < 2 {
        return Err(Error::invalid("PLS needs at least 2 samples"));
    }
    if h == 0 || h > usize::min(n - 1, d) {
        return Err(Error::invalid(format!(
            "component count h={h} outside 1..=min(n-1={}, d={d})",
            n - 1
        )));
    }
    if !has_distinct_rows(x) {
        return Err(Error::invalid("X must contain at least 2 distinct rows"));
    }

    // Center.
    let nf = F::from_usize(n).unwrap();
    let mut x_mean = Array1::zeros(d);
    for j in 0..d {
        x_mean[j] = x.column(j).iter().copied().sum::<F>() / nf;
    }
    let y_mean = y.iter().copied().sum::<F>() / nf;
    let mut xr = x.to_owned();
    for mut row in xr.rows_mut() {
        for j in 0..d {
            row[j] = row[j] - x_mean[j];
        }
    }
    let mut yr: Array1<F> = y.iter().map(|v| *v - y_mean).collect();

    let x_scale = xr.iter().map(|v| *v * *v).sum::<F>().sqrt();
    let y_scale = yr.iter().map(|v| *v * *v).sum::<F>().sqrt();
    let degeneracy_floor = x_scale * y_scale * F::cast(1e-13) + F::min_positive_value();

    let mut weights = Array2::zeros((d, h));
    let mut loadings = Array2::zeros((d, h));
    let mut scores = Array2::zeros((n, h));
    let mut response_loadings = Vec::with_capacity(h);

    for l in 0..h {
        // w ∝ X^(l)ᵀ y^(l)
        let mut w: Array1<F> = Array1::zeros(d);
        for i in 0..n {
            let yi = yr[i];
            if yi == F::zero() {
                continue;
            }
            for j in 0..d {
                w[j] = w[j] + xr[[i, j]] * yi;
            }
        }
        let norm = w.iter().map(|v| *v * *v).sum::<F>().sqrt();
        if norm <= degeneracy_floor {
            return Err(Error::DegenerateResponse(format!(
                "covariance direction vanished at component {} (zero-variance response or exhausted residual)",
                l + 1
            )));
        }
        for v in w.iter_mut() {
            *v = *v / norm;
        }
        canonicalize_sign(&mut w);

        // Score and loadings.
        let mut t: Array1<F> = Array1::zeros(n);
        for i in 0..n {
            let mut s = F::zero();
            for j in 0..d {
                s = s + xr[[i, j]] * w[j];
            }
            t[i] = s;
        }
        let tt = t.iter().map(|v| *v * *v).sum::<F>();
        if tt <= F::min_positive_value() {
            return Err(Error::DegenerateResponse(format!(
                "score variance vanished at component {}",
                l + 1
            )));
        }
        let mut p: Array1<F> = Array1::zeros(d);
        for j in 0..d {
            let mut s = F::zero();
            for i in 0..n {
                s = s + xr[[i, j]] * t[i];
            }
            p[j] = s / tt;
        }
        let c = t
            .iter()
            .zip(yr.iter())
            .map(|(ti, yi)| *ti * *yi)
            .sum::<F>()
            / tt;

        // Deflate.
        for i in 0..n {
            let ti = t[i];
            for j in 0..d {
                xr[[i, j]] = xr[[i, j]] - ti * p[j];
            }
            yr[i] = yr[i] - c * ti;
        }

        weights.column_mut(l).assign(&w);
        loadings.column_mut(l).assign(&p);
        scores.column_mut(l).assign(&t);
        response_loadings.push(c);
    }

    let rotations = compute_rotations(&weights, &loadings, h)?;

    Ok(PlsDecomposition {
        weights,
        loadings,
        rotations,
        scores,
        response_loadings,
        h,
        x_mean,
        y_mean,
    })
}

/// W★ = W (PᵀW)⁻¹, via column-wise solves of the h×h system.
fn compute_rotations<F: Scalar>(w: &Array2<F>, p: &Array2<F>, h: usize) -> Result<Array2<F>> {
    let d = w.nrows();
    let mut m = Array2::zeros((h, h));
    for a in 0..h {
        for b in 0..h {
            let mut s = F::zero();
            for j in 0..d {
                s = s + p[[j, a]] * w[[j, b]];
            }
            m[[a, b]] = s;
        }
    }
    // Solve Mᵀ zᵀ = wᵀ row-wise: W★ᵀ = M⁻¹ Wᵀ, i.e. for each original
    // coordinate j we solve M xj = (row j of W).
    let mt = m.t().to_owned();
    let mut wstar = Array2::zeros((d, h));
    let mut max_cond = 0.0f64;
    for j in 0..d {
        let rhs: Array1<F> = (0..h).map(|l| w[[j, l]]).collect();
        match solve_small(&mt.view(), &rhs.view()) {
            Ok((sol, cond)) => {
                max_cond = max_cond.max(cond);
                if sol.iter().any(|v| !v.is_finite()) || cond > 1e15 {
                    return Err(Error::SingularRotation {
                        cond_estimate: max_cond,
                    });
                }
                for l in 0..h {
                    wstar[[j, l]] = sol[l];
                }
            }
            Err(_) => {
                return Err(Error::SingularRotation {
                    cond_estimate: f64::INFINITY,
                })
            }
        }
    }
    Ok(wstar)
}

/// Flip sign so the first nonzero entry is nonnegative; makes the
/// decomposition deterministic across runs.
fn canonicalize_sign<F: Scalar>(w: &mut Array1<F>) {
    let max_abs = w.iter().fold(F::zero(), |m, v| m.max(v.abs()));
    if max_abs == F::zero() {
        return;
    }
    let tol = max_abs * F::cast(1e-12);
    for v in w.iter() {
        if v.abs() > tol {
            if *v < F::zero() {
                for e in w.iter_mut() {
                    *e = -*e;
                }
            }
            return;
        }
    }
}

fn has_distinct_rows<F: Scalar>(x: &ArrayView2<'_, F>) -> bool {
    let n = x.nrows();
    for i in 1..n {
        if x.row(i) != x.row(0) {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn axis_aligned_response_recovers_axis_weight() {
        // Covariance with y lies entirely along the first coordinate, so the
        // normalized XᵀY direction is (1, 0) after sign canonicalization.
        let x = array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0f64]];
        let y = array![1.0, 0.0, -1.0, 0.0f64];
        let pls = fit_pls(&x.view(), &y.view(), 1).unwrap();
        assert!((pls.weights[[0, 0]] - 1.0).abs() < 1e-14);
        assert!(pls.weights[[1, 0]].abs() < 1e-14);
    }

    #[test]
    fn constant_response_is_degenerate() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [0.5, 0.5f64]];
        let y = array![3.0, 3.0, 3.0f64];
        assert!(matches!(
            fit_pls(&x.view(), &y.view(), 1),
            Err(Error::DegenerateResponse(_))
        ));
    }

    #[test]
    fn single_component_rotation_is_rescaled_weight() {
        // For h=1, W★ = w / (pᵀw): evaluate the formula by hand.
        let x = array![[0.2, 1.4], [1.1, 0.3], [-0.7, 0.9], [0.4, -1.2f64]];
        let y = array![1.0, -0.5, 0.7, 0.1f64];
        let pls = fit_pls(&x.view(), &y.view(), 1).unwrap();
        let ptw: f64 = (0..2).map(|j| pls.loadings[[j, 0]] * pls.weights[[j, 0]]).sum();
        for j in 0..2 {
            assert!((pls.rotations[[j, 0]] - pls.weights[[j, 0]] / ptw).abs() < 1e-12);
        }
    }

    fn random_problem(n: usize, d: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(n, |i| {
            let row = x.row(i);
            row[0] * 2.0 - row[(d - 1).min(1)] * 0.5 + rng.random_range(-0.05..0.05)
        });
        (x, y)
    }

    #[test]
    fn scores_are_pairwise_orthogonal() {
        for seed in 0..5 {
            let (x, y) = random_problem(12, 4, seed);
            let pls = fit_pls(&x.view(), &y.view(), 3).unwrap();
            for a in 0..3 {
                for b in a + 1..3 {
                    let ta = pls.scores.column(a);
                    let tb = pls.scores.column(b);
                    let dot: f64 = ta.iter().zip(tb.iter()).map(|(u, v)| u * v).sum();
                    let na: f64 = ta.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let nb: f64 = tb.iter().map(|v| v * v).sum::<f64>().sqrt();
                    assert!(dot.abs() <= 1e-8 * na * nb, "scores {a},{b} not orthogonal");
                }
            }
        }
    }

    #[test]
    fn full_rank_pls_matches_least_squares() {
        // With h = d the inner linear model must coincide with OLS on the
        // centered data. OLS solved independently via the normal equations.
        for seed in 20..25 {
            let (x, y) = random_problem(9, 5, seed);
            let pls = fit_pls(&x.view(), &y.view(), 5).unwrap();

            let n = x.nrows();
            let d = x.ncols();
            let xm: Array1<f64> = (0..d).map(|j| x.column(j).sum() / n as f64).collect();
            let ym = y.sum() / n as f64;
            let mut xc = x.clone();
            for mut row in xc.rows_mut() {
                for j in 0..d {
                    row[j] -= xm[j];
                }
            }
            let yc: Array1<f64> = y.iter().map(|v| v - ym).collect();
            let xtx = xc.t().dot(&xc);
            let xty = xc.t().dot(&yc);
            let (b_ols, _) = solve_small(&xtx.view(), &xty.view()).unwrap();

            for i in 0..n {
                let pred_pls = pls.predict_inner(&x.row(i));
                let pred_ols = ym + xc.row(i).dot(&b_ols);
                let scale = 1.0 + pred_ols.abs();
                assert!(
                    (pred_pls - pred_ols).abs() <= 1e-8 * scale,
                    "seed {seed} row {i}: {pred_pls} vs {pred_ols}"
                );
            }
        }
    }

    #[test]
    fn weight_sign_is_canonical() {
        for seed in 0..20 {
            let (x, y) = random_problem(8, 3, seed);
            let pls = fit_pls(&x.view(), &y.view(), 2).unwrap();
            for l in 0..2 {
                let col = pls.weights.column(l);
                let max_abs = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let first = col.iter().find(|v| v.abs() > 1e-12 * max_abs).unwrap();
                assert!(*first >= 0.0);
            }
        }
    }

    #[test]
    fn component_count_validation() {
        let (x, y) = random_problem(4, 6, 3);
        assert!(fit_pls(&x.view(), &y.view(), 4).is_err()); // h > n-1
        assert!(fit_pls(&x.view(), &y.view(), 0).is_err());
        let (x2, y2) = random_problem(9, 3, 3);
        assert!(fit_pls(&x2.view(), &y2.view(), 4).is_err()); // h > d
    }

    #[test]
    fn scores_match_rotation_identity() {
        // t_l = X_c w★^(l) on the centered data.
        let (x, y) = random_problem(10, 4, 77);
        let pls = fit_pls(&x.view(), &y.view(), 3).unwrap();
        let n = x.nrows();
        for l in 0..3 {
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..4 {
                    s += (x[[i, j]] - pls.x_mean[j]) * pls.rotations[[j, l]];
                }
                assert!(
                    (s - pls.scores[[i, l]]).abs() < 1e-10,
                    "component {l} row {i}"
                );
            }
        }
    }
}
