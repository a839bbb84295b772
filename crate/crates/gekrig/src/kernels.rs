//! Correlation kernels and correlation-matrix assembly.
//!
//! Three Gaussian-exponential variants share one evaluation path: the plain
//! anisotropic kernel with one hyperparameter per input direction, and two
//! projected kernels whose hyperparameters weight fixed PLS coefficient
//! vectors instead. Derivative blocks for direct gradient-enhanced systems
//! live here too.
//!
//! Inputs are expected in unit-hypercube coordinates; hyperparameters are
//! dimensionless.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CholeskyFactor, FactorFailure};
use crate::Scalar;

/// Correlation-function variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelVariant<F> {
    /// `Π_k exp(-θ_k (x_k - x'_k)²)`, one hyperparameter per direction.
    SqExp { theta: Vec<F> },
    /// PLS-projected kernel: `h` hyperparameters weight the squared rotation
    /// coefficients, `Π_l Π_i exp(-θ_l (w★_il x_i - w★_il x'_i)²)`.
    KplsSqExp { theta: Vec<F>, wstar: Array2<F> },
    /// Same construction with averaged local PLS coefficients.
    GeKplsSqExp { theta: Vec<F>, wav: Array2<F> },
}

/// A correlation kernel plus its starting nugget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec<F> {
    pub variant: KernelVariant<F>,
    pub nugget: F,
}

/// Which mixed second-derivative expression the gradient blocks use.
///
/// `Analytic` is the true second derivative of the Gaussian kernel and keeps
/// the gradient-gradient blocks consistent with finite differences.
/// `PrintedForm` drops the `2 θ_k δ_kl r` term, matching a commonly printed
/// block formula verbatim; it zeroes the diagonal gradient blocks and is
/// provided for comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GradBlockMode {
    #[default]
    Analytic,
    PrintedForm,
}

/// Diagonal-escalation policy for factorization failures: try the spec's own
/// nugget first, then climb the ladder until the cap.
///
/// The ladder starts at 1e-12. Taylor-augmented systems interpolate with a
/// defect of exactly `nugget·α_i` per stored point, and their weights grow
/// like `|∂y/∂u| / (θ·Δ)`; a larger starting nugget visibly breaks
/// interpolation on steep responses long before factorization needs help.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NuggetPolicy {
    pub initial: f64,
    pub factor: f64,
    pub max: f64,
}

impl Default for NuggetPolicy {
    fn default() -> Self {
        NuggetPolicy {
            initial: 1e-12,
            factor: 100.0,
            max: 1e-4,
        }
    }
}

impl NuggetPolicy {
    /// Ladder of nugget values starting from `from` (the spec's nugget).
    fn ladder(&self, from: f64) -> Vec<f64> {
        let mut vals = vec![from];
        let mut v = if from > 0.0 {
            (from * self.factor).max(self.initial)
        } else {
            self.initial
        };
        while v < self.max {
            vals.push(v);
            v *= self.factor;
        }
        if *vals.last().unwrap() < self.max {
            vals.push(self.max);
        }
        vals
    }
}

impl<F: Scalar> KernelSpec<F> {
    pub fn sq_exp(theta: Vec<F>) -> Self {
        KernelSpec {
            variant: KernelVariant::SqExp { theta },
            nugget: F::cast(NuggetPolicy::default().initial),
        }
    }

    pub fn kpls(theta: Vec<F>, wstar: Array2<F>) -> Self {
        KernelSpec {
            variant: KernelVariant::KplsSqExp { theta, wstar },
            nugget: F::cast(NuggetPolicy::default().initial),
        }
    }

    pub fn gekpls(theta: Vec<F>, wav: Array2<F>) -> Self {
        KernelSpec {
            variant: KernelVariant::GeKplsSqExp { theta, wav },
            nugget: F::cast(NuggetPolicy::default().initial),
        }
    }

    pub fn theta(&self) -> &[F] {
        match &self.variant {
            KernelVariant::SqExp { theta }
            | KernelVariant::KplsSqExp { theta, .. }
            | KernelVariant::GeKplsSqExp { theta, .. } => theta,
        }
    }

    /// Replace the hyperparameter vector, keeping projections and nugget.
    pub fn with_theta(&self, theta: Vec<F>) -> Self {
        let mut out = self.clone();
        match &mut out.variant {
            KernelVariant::SqExp { theta: t }
            | KernelVariant::KplsSqExp { theta: t, .. }
            | KernelVariant::GeKplsSqExp { theta: t, .. } => *t = theta,
        }
        out
    }

    /// Number of input dimensions the kernel acts on.
    pub fn input_dim(&self) -> usize {
        match &self.variant {
            KernelVariant::SqExp { theta } => theta.len(),
            KernelVariant::KplsSqExp { wstar, .. } => wstar.nrows(),
            KernelVariant::GeKplsSqExp { wav, .. } => wav.nrows(),
        }
    }

    /// Number of hyperparameters (d for the plain kernel, h for projected).
    pub fn n_params(&self) -> usize {
        self.theta().len()
    }

    /// Collapse a projected kernel to plain-kernel hyperparameters via
    /// `η_i = Σ_l θ_l coef_il²`. Identity for the plain kernel.
    pub fn effective_full_theta(&self) -> Vec<F> {
        match &self.variant {
            KernelVariant::SqExp { theta } => theta.clone(),
            KernelVariant::KplsSqExp { theta, wstar } => collapse(theta, wstar),
            KernelVariant::GeKplsSqExp { theta, wav } => collapse(theta, wav),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta().is_empty() {
            return Err(Error::InvalidKernel("empty hyperparameter vector".into()));
        }
        for t in self.theta() {
            if !t.is_finite() || *t <= F::zero() {
                return Err(Error::InvalidKernel(format!(
                    "hyperparameters must be positive and finite, got {t}"
                )));
            }
        }
        let coeffs = match &self.variant {
            KernelVariant::SqExp { .. } => None,
            KernelVariant::KplsSqExp { wstar, .. } => Some(wstar),
            KernelVariant::GeKplsSqExp { wav, .. } => Some(wav),
        };
        if let Some(c) = coeffs {
            if c.ncols() != self.theta().len() {
                return Err(Error::InvalidKernel(format!(
                    "coefficient matrix has {} columns for {} hyperparameters",
                    c.ncols(),
                    self.theta().len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidKernel("non-finite projection coefficient".into()));
            }
        }
        if !(self.nugget >= F::zero()) {
            return Err(Error::InvalidKernel("nugget must be nonnegative".into()));
        }
        Ok(())
    }

    /// Per-component squared generalized distances between two points; the
    /// correlation is `exp(-θ · q)`.
    fn component_sq_dists(&self, x: &[F], y: &[F], out: &mut [F]) {
        match &self.variant {
            KernelVariant::SqExp { theta } => {
                for k in 0..theta.len() {
                    let t = x[k] - y[k];
                    out[k] = t * t;
                }
            }
            KernelVariant::KplsSqExp { theta, wstar } => {
                projected_sq_dists(x, y, wstar, theta.len(), out)
            }
            KernelVariant::GeKplsSqExp { theta, wav } => {
                projected_sq_dists(x, y, wav, theta.len(), out)
            }
        }
    }
}

fn collapse<F: Scalar>(theta: &[F], coeffs: &Array2<F>) -> Vec<F> {
    let d = coeffs.nrows();
    (0..d)
        .map(|i| {
            let mut s = F::zero();
            for (l, t) in theta.iter().enumerate() {
                let c = coeffs[[i, l]];
                s = s + *t * c * c;
            }
            s
        })
        .collect()
}

fn projected_sq_dists<F: Scalar>(x: &[F], y: &[F], coeffs: &Array2<F>, h: usize, out: &mut [F]) {
    let d = coeffs.nrows();
    for l in 0..h {
        let mut s = F::zero();
        for i in 0..d {
            let c = coeffs[[i, l]];
            let t = c * (x[i] - y[i]);
            s = s + t * t;
        }
        out[l] = s;
    }
}

/// Correlation between two points, in (0, 1]; identical points give exactly 1.
pub fn correlate<F: Scalar>(spec: &KernelSpec<F>, x: &ArrayView1<'_, F>, y: &ArrayView1<'_, F>) -> Result<F> {
    spec.validate()?;
    let xs = x.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| x.to_vec());
    let ys = y.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| y.to_vec());
    if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input point"));
    }
    let mut q = vec![F::zero(); spec.n_params()];
    spec.component_sq_dists(&xs, &ys, &mut q);
    Ok(exp_neg_dot(spec.theta(), &q))
}

#[inline]
fn exp_neg_dot<F: Scalar>(theta: &[F], q: &[F]) -> F {
    let mut s = F::zero();
    for (t, qi) in theta.iter().zip(q) {
        s = s + *t * *qi;
    }
    let r = (-s).exp();
    if r < F::correlation_floor() {
        F::correlation_floor()
    } else {
        r
    }
}

/// First and mixed second derivatives of the plain Gaussian correlation
/// between two points: (∂r/∂x, ∂r/∂x', ∂²r/∂x∂x').
pub fn correlate_grad_blocks<F: Scalar>(
    spec: &KernelSpec<F>,
    xi: &ArrayView1<'_, F>,
    xj: &ArrayView1<'_, F>,
    mode: GradBlockMode,
) -> Result<(Array1<F>, Array1<F>, Array2<F>)> {
    let theta = match &spec.variant {
        KernelVariant::SqExp { theta } => theta.clone(),
        _ => {
            return Err(Error::UnsupportedKernel(
                "derivative blocks are defined for the plain squared-exponential kernel".into(),
            ))
        }
    };
    let r = correlate(spec, xi, xj)?;
    let d = theta.len();
    let two = F::cast(2.0);
    let four = F::cast(4.0);
    let mut di = Array1::zeros(d);
    let mut dj = Array1::zeros(d);
    let mut dd = Array2::zeros((d, d));
    for k in 0..d {
        let delta_k = xi[k] - xj[k];
        di[k] = -two * theta[k] * delta_k * r;
        dj[k] = two * theta[k] * delta_k * r;
        for l in 0..d {
            let delta_l = xi[l] - xj[l];
            let mut v = -four * theta[k] * theta[l] * delta_k * delta_l * r;
            if mode == GradBlockMode::Analytic && k == l {
                v = v + two * theta[k] * r;
            }
            dd[[k, l]] = v;
        }
    }
    Ok((di, dj, dd))
}

/// Correlation matrix with its Cholesky factor; the stored matrix includes
/// the nugget that was actually used.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix<F> {
    pub r: Array2<F>,
    pub chol: CholeskyFactor<F>,
    pub logdet: F,
    /// Diagonal addition that made the factorization succeed.
    pub nugget_used: F,
}

/// Pairwise correlation matrix over a point set, with nugget escalation.
pub fn assemble_r<F: Scalar>(
    spec: &KernelSpec<F>,
    points: &ArrayView2<'_, F>,
    policy: &NuggetPolicy,
) -> Result<CorrelationMatrix<F>> {
    spec.validate()?;
    let comps = PairComponents::from_points(spec, points);
    comps.assemble(spec.theta(), spec.nugget, policy)
}

/// Direct gradient-enhanced correlation matrix of size n(d+1): value-value,
/// value-gradient, gradient-value and gradient-gradient blocks.
pub fn assemble_r_direct_gek<F: Scalar>(
    spec: &KernelSpec<F>,
    points: &ArrayView2<'_, F>,
    mode: GradBlockMode,
    policy: &NuggetPolicy,
) -> Result<CorrelationMatrix<F>> {
    let raw = gek_raw_matrix(spec, points, mode)?;
    factor_with_ladder(raw, spec.nugget, policy)
}

pub(crate) fn gek_raw_matrix<F: Scalar>(
    spec: &KernelSpec<F>,
    points: &ArrayView2<'_, F>,
    mode: GradBlockMode,
) -> Result<Array2<F>> {
    spec.validate()?;
    if !matches!(spec.variant, KernelVariant::SqExp { .. }) {
        return Err(Error::UnsupportedKernel(
            "direct gradient-enhanced assembly needs the plain squared-exponential kernel".into(),
        ));
    }
    let n = points.nrows();
    let d = points.ncols();
    if n == 0 {
        return Err(Error::invalid("empty point set"));
    }
    let size = n * (d + 1);
    let mut r = Array2::zeros((size, size));
    for i in 0..n {
        for j in 0..n {
            let xi = points.row(i);
            let xj = points.row(j);
            let (di, dj, dd) = correlate_grad_blocks(spec, &xi, &xj, mode)?;
            r[[i, j]] = correlate(spec, &xi, &xj)?;
            for k in 0..d {
                // value row i against gradient entries of sample j
                r[[i, n + j * d + k]] = dj[k];
                // gradient rows of sample i against value column j
                r[[n + i * d + k, j]] = di[k];
                for l in 0..d {
                    r[[n + i * d + k, n + j * d + l]] = dd[[k, l]];
                }
            }
        }
    }
    Ok(r)
}

/// Correlation vector between a query point and a stored point set.
pub fn correlate_vec<F: Scalar>(
    spec: &KernelSpec<F>,
    x: &ArrayView1<'_, F>,
    points: &ArrayView2<'_, F>,
) -> Result<Array1<F>> {
    spec.validate()?;
    let xs: Vec<F> = x.to_vec();
    let mut q = vec![F::zero(); spec.n_params()];
    let mut out = Array1::zeros(points.nrows());
    for (i, row) in points.rows().into_iter().enumerate() {
        let rs: Vec<F> = row.to_vec();
        spec.component_sq_dists(&xs, &rs, &mut q);
        out[i] = exp_neg_dot(spec.theta(), &q);
    }
    Ok(out)
}

/// Gradient-enhanced correlation vector of length n(d+1): plain correlations
/// followed, per stored sample, by the derivatives of that correlation with
/// respect to the stored sample's coordinates.
pub fn correlate_vec_gek<F: Scalar>(
    spec: &KernelSpec<F>,
    x: &ArrayView1<'_, F>,
    points: &ArrayView2<'_, F>,
) -> Result<Array1<F>> {
    let theta = match &spec.variant {
        KernelVariant::SqExp { theta } => theta.clone(),
        _ => {
            return Err(Error::UnsupportedKernel(
                "gradient-enhanced correlation vector needs the plain kernel".into(),
            ))
        }
    };
    let n = points.nrows();
    let d = points.ncols();
    let two = F::cast(2.0);
    let mut out = Array1::zeros(n * (d + 1));
    for i in 0..n {
        let xi = points.row(i);
        let r = correlate(spec, &xi, x)?;
        out[i] = r;
        for k in 0..d {
            out[n + i * d + k] = -two * theta[k] * (xi[k] - x[k]) * r;
        }
    }
    Ok(out)
}

/// Cached per-pair component distances for repeated assembly at different
/// hyperparameters; this is the hot path of likelihood optimization.
#[derive(Debug, Clone)]
pub(crate) struct PairComponents<F> {
    pub n: usize,
    pub c: usize,
    /// Pair-major storage: q[(pair_index) * c ..][..c], pairs in row-major
    /// (i, j) order with i < j.
    pub q: Vec<F>,
}

impl<F: Scalar> PairComponents<F> {
    pub fn from_points(spec: &KernelSpec<F>, points: &ArrayView2<'_, F>) -> Self {
        let n = points.nrows();
        let c = spec.n_params();
        let mut q = vec![F::zero(); n * (n - 1) / 2 * c];
        let rows: Vec<Vec<F>> = points.rows().into_iter().map(|r| r.to_vec()).collect();
        let mut p = 0;
        for i in 0..n {
            for j in i + 1..n {
                spec.component_sq_dists(&rows[i], &rows[j], &mut q[p * c..(p + 1) * c]);
                p += 1;
            }
        }
        PairComponents { n, c, q }
    }

    /// Assemble and factor the correlation matrix at `theta`.
    pub fn assemble(&self, theta: &[F], nugget: F, policy: &NuggetPolicy) -> Result<CorrelationMatrix<F>> {
        assert_eq!(theta.len(), self.c);
        let n = self.n;
        let mut r = Array2::zeros((n, n));
        let mut p = 0;
        for i in 0..n {
            r[[i, i]] = F::one();
            for j in i + 1..n {
                let v = exp_neg_dot(theta, &self.q[p * self.c..(p + 1) * self.c]);
                r[[i, j]] = v;
                r[[j, i]] = v;
                p += 1;
            }
        }
        factor_with_ladder(r, nugget, policy)
    }
}

/// Add the nugget, factor, and escalate on failure.
pub(crate) fn factor_with_ladder<F: Scalar>(
    mut r: Array2<F>,
    nugget: F,
    policy: &NuggetPolicy,
) -> Result<CorrelationMatrix<F>> {
    let base_diag: Vec<F> = (0..r.nrows()).map(|i| r[[i, i]]).collect();
    let mut last_failure: Option<FactorFailure> = None;
    for nu in policy.ladder(nugget.to_f64().unwrap_or(0.0)) {
        let nu_f = F::cast(nu);
        for i in 0..r.nrows() {
            r[[i, i]] = base_diag[i] + nu_f;
        }
        match CholeskyFactor::factor(&r.view()) {
            Ok(chol) => {
                let logdet = chol.logdet();
                return Ok(CorrelationMatrix {
                    r,
                    chol,
                    logdet,
                    nugget_used: nu_f,
                });
            }
            Err(f) => last_failure = Some(f),
        }
    }
    let cond = last_failure.map(|f| f.cond_estimate).unwrap_or(f64::INFINITY);
    Err(Error::IllConditioned {
        cond_estimate: cond,
        nugget: policy.max,
    })
}
