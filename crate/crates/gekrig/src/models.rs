//! End-to-end fitting and prediction for the six surrogate kinds.
//!
//! Every model normalizes inputs to the unit hypercube before touching a
//! kernel, so hyperparameter bounds are problem-independent; gradients are
//! rescaled accordingly. The fitted state is immutable: prediction only
//! reads the stored factor and weights.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::doe::{displacement_set, Bounds};
use crate::error::{Error, Result};
use crate::kernels::{
    correlate_vec, correlate_vec_gek, GradBlockMode, KernelSpec, KernelVariant, NuggetPolicy,
};
use crate::likelihood::{LikelihoodContext, LikelihoodState};
use crate::linalg::CholeskyFactor;
use crate::optimizer::{
    maximize_derivative_free, maximize_gradient_based, SearchSpace, BUDGET_PER_DIM, DEFAULT_STARTS,
};
use crate::pls::fit_pls;
use crate::Scalar;

/// Which surrogate construction produced a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Kriging,
    Kpls,
    Kplsk,
    GekIndirect,
    GekDirect,
    GeKpls,
}

impl ModelKind {
    pub fn uses_gradients(&self) -> bool {
        matches!(
            self,
            ModelKind::GekIndirect | ModelKind::GekDirect | ModelKind::GeKpls
        )
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kriging" => Ok(ModelKind::Kriging),
            "kpls" => Ok(ModelKind::Kpls),
            "kplsk" => Ok(ModelKind::Kplsk),
            "gek-indirect" | "gek_indirect" | "gekindirect" => Ok(ModelKind::GekIndirect),
            "gek-direct" | "gek_direct" | "gekdirect" => Ok(ModelKind::GekDirect),
            "gekpls" | "ge-kpls" => Ok(ModelKind::GeKpls),
            other => Err(Error::invalid(format!("unknown model kind '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Kriging => "kriging",
            ModelKind::Kpls => "kpls",
            ModelKind::Kplsk => "kplsk",
            ModelKind::GekIndirect => "gek-indirect",
            ModelKind::GekDirect => "gek-direct",
            ModelKind::GeKpls => "gekpls",
        }
    }
}

/// Sample matrix, responses, optional gradients, and the domain they live in.
#[derive(Debug, Clone)]
pub struct TrainingData<F> {
    pub x: Array2<F>,
    pub y: Array1<F>,
    pub dy: Option<Array2<F>>,
    pub bounds: Bounds<F>,
}

impl<F: Scalar> TrainingData<F> {
    pub fn new(x: Array2<F>, y: Array1<F>, bounds: Bounds<F>) -> Result<Self> {
        Self::build(x, y, None, bounds)
    }

    pub fn with_gradients(
        x: Array2<F>,
        y: Array1<F>,
        dy: Array2<F>,
        bounds: Bounds<F>,
    ) -> Result<Self> {
        Self::build(x, y, Some(dy), bounds)
    }

    fn build(x: Array2<F>, y: Array1<F>, dy: Option<Array2<F>>, bounds: Bounds<F>) -> Result<Self> {
        let n = x.nrows();
        let d = x.ncols();
        if n == 0 || d == 0 {
            return Err(Error::invalid("empty training set"));
        }
        if y.len() != n {
            return Err(Error::invalid("response length mismatch"));
        }
        if d != bounds.dim() {
            return Err(Error::invalid("bounds dimension mismatch"));
        }
        if let Some(g) = &dy {
            if g.nrows() != n || g.ncols() != d {
                return Err(Error::invalid("gradient matrix must be n×d"));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite gradient entry"));
            }
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite training entry"));
        }
        Ok(TrainingData { x, y, dy, bounds })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn require_distinct_rows(&self) -> Result<()> {
        let n = self.n();
        for i in 0..n {
            for j in i + 1..n {
                if self.x.row(i) == self.x.row(j) {
                    return Err(Error::invalid(format!(
                        "duplicate sample rows {i} and {j}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn require_gradients(&self) -> Result<&Array2<F>> {
        self.dy
            .as_ref()
            .ok_or_else(|| Error::invalid("this model needs gradients in the training data"))
    }

    /// Gradients with respect to normalized coordinates: ∂y/∂u_j = ∂y/∂x_j · range_j.
    fn normalized_gradients(&self) -> Result<Array2<F>> {
        let g = self.require_gradients()?;
        let mut gu = g.clone();
        for mut row in gu.rows_mut() {
            for j in 0..self.dim() {
                row[j] = row[j] * self.bounds.range(j);
            }
        }
        Ok(gu)
    }
}

/// GE-KPLS configuration: component count, extra points per sample and the
/// Taylor step as a fraction of each direction's range.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GeKplsConfig<F> {
    pub h: usize,
    pub m: usize,
    pub fota_step: F,
}

impl<F: Scalar> Default for GeKplsConfig<F> {
    fn default() -> Self {
        GeKplsConfig {
            h: 1,
            m: 1,
            fota_step: F::cast(DEFAULT_FOTA_STEP),
        }
    }
}

impl<F: Scalar> GeKplsConfig<F> {
    pub fn new(h: usize, m: usize, fota_step: F) -> Self {
        GeKplsConfig { h, m, fota_step }
    }
}

/// Default Taylor step: 1e-4 of each direction's range.
pub const DEFAULT_FOTA_STEP: f64 = 1e-4;
/// Gradient-enhanced systems are rejected above this many correlation rows.
pub const DEFAULT_GEK_ROW_CAP: usize = 3000;
/// Default component counts: 3 for the projected kernels, 1 for GE-KPLS.
pub const DEFAULT_KPLS_COMPONENTS: usize = 3;
pub const DEFAULT_GEKPLS_COMPONENTS: usize = 1;

/// Fit metadata carried alongside the numeric state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitMeta {
    pub h: Option<usize>,
    pub m: Option<usize>,
    pub fota_step: Option<f64>,
    pub nugget_used: f64,
    pub fit_seconds: f64,
    /// Final concentrated log-likelihood.
    pub cll: f64,
    /// For the two-stage fit: the stage-one likelihood expressed in the full
    /// hyperparameter space, i.e. the gradient stage's starting value.
    pub stage1_cll: Option<f64>,
    pub seed: u64,
}

/// Immutable trained surrogate.
#[derive(Debug, Clone)]
pub struct FittedSurrogate<F> {
    pub kind: ModelKind,
    pub spec: KernelSpec<F>,
    pub bounds: Bounds<F>,
    pub mu_hat: F,
    pub sigma2_hat: F,
    /// Stored training inputs in normalized coordinates. For the direct
    /// gradient-enhanced model these are the n base samples; for the
    /// augmented models they include the extra Taylor points.
    pub train_points: Array2<F>,
    /// Responses in system layout (augmented for the direct model).
    pub train_values: Array1<F>,
    pub meta: FitMeta,
    chol: CholeskyFactor<F>,
    alpha: Array1<F>,
    rinv_ones: Array1<F>,
    ones_rinv_ones: F,
}

impl<F: Scalar> FittedSurrogate<F> {
    pub fn theta(&self) -> &[F] {
        self.spec.theta()
    }

    pub fn input_dim(&self) -> usize {
        self.bounds.dim()
    }

    /// Correlation vector between a normalized query and the stored system.
    fn query_correlations(&self, u: &Array1<F>) -> Result<Array1<F>> {
        match self.kind {
            ModelKind::GekDirect => {
                correlate_vec_gek(&self.spec, &u.view(), &self.train_points.view())
            }
            _ => correlate_vec(&self.spec, &u.view(), &self.train_points.view()),
        }
    }

    /// Best linear unbiased prediction at a physical point.
    pub fn predict(&self, x: &[F]) -> Result<F> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid("query dimension mismatch"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite query point"));
        }
        let mut u = Array1::zeros(self.input_dim());
        self.bounds
            .normalize_point(x, u.as_slice_mut().expect("contiguous"));
        let r = self.query_correlations(&u)?;
        let mut acc = self.mu_hat;
        for i in 0..r.len() {
            acc = acc + r[i] * self.alpha[i];
        }
        Ok(acc)
    }

    /// Batched prediction over rows of a physical-coordinate matrix.
    pub fn predict_batch(&self, x: &ArrayView2<'_, F>) -> Result<Array1<F>> {
        let mut out = Array1::zeros(x.nrows());
        for (i, row) in x.rows().into_iter().enumerate() {
            let r: Vec<F> = row.to_vec();
            out[i] = self.predict(&r)?;
        }
        Ok(out)
    }

    /// Ordinary-kriging prediction variance with the constant-trend term.
    /// At training points this collapses to the nugget level.
    pub fn predict_variance(&self, x: &[F]) -> Result<F> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid("query dimension mismatch"));
        }
        let mut u = Array1::zeros(self.input_dim());
        self.bounds
            .normalize_point(x, u.as_slice_mut().expect("contiguous"));
        let r = self.query_correlations(&u)?;
        let rinv_r = self.chol.solve_vec(&r.view());
        let r_rinv_r: F = r.iter().zip(rinv_r.iter()).map(|(a, b)| *a * *b).sum();
        let ones_rinv_r: F = r
            .iter()
            .zip(self.rinv_ones.iter())
            .map(|(a, b)| *a * *b)
            .sum();
        let trend = (F::one() - ones_rinv_r) * (F::one() - ones_rinv_r) / self.ones_rinv_ones;
        let v = self.sigma2_hat * (F::one() - r_rinv_r + trend);
        Ok(v.max(F::zero()))
    }
}

/// Displace a sample and extrapolate its response to first order:
/// the new point is `x + offset` and its value `y + g·offset`.
pub fn fota_extrapolate<F: Scalar>(x: &[F], y: F, g: &[F], offset: &[F]) -> (Vec<F>, F) {
    debug_assert_eq!(x.len(), g.len());
    debug_assert_eq!(x.len(), offset.len());
    let point: Vec<F> = x.iter().zip(offset).map(|(a, b)| *a + *b).collect();
    let mut v = y;
    for (gi, oi) in g.iter().zip(offset) {
        v = v + *gi * *oi;
    }
    (point, v)
}

/// Indices of the `m` largest-magnitude coefficients, stably sorted by
/// descending magnitude with ascending index as the tie-break.
pub fn top_m_directions<F: Scalar>(coeffs: &[F], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..coeffs.len()).collect();
    idx.sort_by(|&a, &b| {
        coeffs[b]
            .abs()
            .partial_cmp(&coeffs[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(m);
    idx
}

struct FitShared<F> {
    kind: ModelKind,
    spec_template: KernelSpec<F>,
    points: Array2<F>,
    values: Array1<F>,
    gek_mode: Option<GradBlockMode>,
    seed: u64,
    meta_h: Option<usize>,
    meta_m: Option<usize>,
    meta_fota: Option<f64>,
}

/// Shared optimize-then-assemble path for every model kind.
fn optimize_and_finalize<F: Scalar>(
    shared: FitShared<F>,
    bounds: &Bounds<F>,
    started: Instant,
) -> Result<FittedSurrogate<F>> {
    let FitShared {
        kind,
        spec_template,
        points,
        values,
        gek_mode,
        seed,
        meta_h,
        meta_m,
        meta_fota,
    } = shared;

    if response_is_constant(&values) {
        return Err(Error::DegenerateResponse(
            "constant response has no likelihood optimum".into(),
        ));
    }

    let ctx = match gek_mode {
        None => LikelihoodContext::new(spec_template.clone(), &points.view(), values.clone())?,
        Some(mode) => LikelihoodContext::new_direct_gek(
            spec_template.clone(),
            &points.view(),
            values.clone(),
            mode,
        )?,
    };

    let c = spec_template.n_params();
    let space = SearchSpace::theta_default(c);
    let budget = BUDGET_PER_DIM * c;
    let objective = |theta: &[F]| -> Result<F> {
        let st = ctx.eval(theta)?;
        if st.degenerate {
            return Err(Error::DegenerateResponse("degenerate variance".into()));
        }
        Ok(st.cll)
    };
    let opt = maximize_derivative_free(objective, &space, budget.max(c + 2), DEFAULT_STARTS, seed)?;
    let state = ctx.eval(&opt.theta)?;
    let spec = {
        let mut s = spec_template.with_theta(opt.theta.clone());
        s.nugget = state.corr.nugget_used;
        s
    };
    Ok(build_surrogate(
        kind,
        spec,
        bounds.clone(),
        points,
        values,
        state,
        FitMeta {
            h: meta_h,
            m: meta_m,
            fota_step: meta_fota,
            nugget_used: 0.0, // filled by build_surrogate
            fit_seconds: started.elapsed().as_secs_f64(),
            cll: 0.0,
            stage1_cll: None,
            seed,
        },
    ))
}

fn build_surrogate<F: Scalar>(
    kind: ModelKind,
    spec: KernelSpec<F>,
    bounds: Bounds<F>,
    points: Array2<F>,
    values: Array1<F>,
    state: LikelihoodState<F>,
    mut meta: FitMeta,
) -> FittedSurrogate<F> {
    meta.nugget_used = state.corr.nugget_used.to_f64().unwrap_or(f64::NAN);
    meta.cll = state.cll.to_f64().unwrap_or(f64::NAN);
    FittedSurrogate {
        kind,
        spec,
        bounds,
        mu_hat: state.mu_hat,
        sigma2_hat: state.sigma2_hat,
        train_points: points,
        train_values: values,
        meta,
        chol: state.corr.chol,
        alpha: state.alpha,
        rinv_ones: state.rinv_ones,
        ones_rinv_ones: state.ones_rinv_ones,
    }
}

fn response_is_constant<F: Scalar>(y: &Array1<F>) -> bool {
    y.iter().all(|v| *v == y[0])
}

/// Ordinary kriging with the plain anisotropic kernel, `d` hyperparameters.
pub fn fit_kriging<F: Scalar>(data: &TrainingData<F>, seed: u64) -> Result<FittedSurrogate<F>> {
    let started = Instant::now();
    if data.n() < 2 {
        return Err(Error::invalid("kriging needs at least 2 samples"));
    }
    data.require_distinct_rows()?;
    let u = data.bounds.normalize(&data.x);
    let d = data.dim();
    optimize_and_finalize(
        FitShared {
            kind: ModelKind::Kriging,
            spec_template: KernelSpec::sq_exp(vec![F::one(); d]),
            points: u,
            values: data.y.clone(),
            gek_mode: None,
            seed,
            meta_h: None,
            meta_m: None,
            meta_fota: None,
        },
        &data.bounds,
        started,
    )
}

/// Kriging with a fixed hyperparameter vector; no likelihood search.
pub fn fit_kriging_with_theta<F: Scalar>(
    data: &TrainingData<F>,
    theta: Vec<F>,
) -> Result<FittedSurrogate<F>> {
    let started = Instant::now();
    if theta.len() != data.dim() {
        return Err(Error::invalid("theta length must equal the dimension"));
    }
    data.require_distinct_rows()?;
    let u = data.bounds.normalize(&data.x);
    let spec = KernelSpec::sq_exp(theta);
    let ctx = LikelihoodContext::new(spec.clone(), &u.view(), data.y.clone())?;
    let state = ctx.eval(spec.theta())?;
    let mut spec_out = spec;
    spec_out.nugget = state.corr.nugget_used;
    Ok(build_surrogate(
        ModelKind::Kriging,
        spec_out,
        data.bounds.clone(),
        u,
        data.y.clone(),
        state,
        FitMeta {
            h: None,
            m: None,
            fota_step: None,
            nugget_used: 0.0,
            fit_seconds: started.elapsed().as_secs_f64(),
            cll: 0.0,
            stage1_cll: None,
            seed: 0,
        },
    ))
}

/// KPLS: global PLS rotation coefficients feed a projected kernel with `h`
/// hyperparameters.
pub fn fit_kpls<F: Scalar>(data: &TrainingData<F>, h: usize, seed: u64) -> Result<FittedSurrogate<F>> {
    let started = Instant::now();
    data.require_distinct_rows()?;
    let u = data.bounds.normalize(&data.x);
    let pls = fit_pls(&u.view(), &data.y.view(), h)?;
    optimize_and_finalize(
        FitShared {
            kind: ModelKind::Kpls,
            spec_template: KernelSpec::kpls(vec![F::one(); h], pls.rotations.clone()),
            points: u,
            values: data.y.clone(),
            gek_mode: None,
            seed,
            meta_h: Some(h),
            meta_m: None,
            meta_fota: None,
        },
        &data.bounds,
        started,
    )
}

/// KPLSK: a KPLS stage provides the starting point, mapped into the full
/// space via `η_i = Σ_l θ_l w★_il²`, then a bounded gradient ascent refines
/// all `d` hyperparameters. The final likelihood is never below the mapped
/// starting value.
pub fn fit_kplsk<F: Scalar>(data: &TrainingData<F>, h: usize, seed: u64) -> Result<FittedSurrogate<F>> {
    let started = Instant::now();
    let stage1 = fit_kpls(data, h, seed)?;
    let d = data.dim();

    let mut eta = stage1.spec.effective_full_theta();
    let space = SearchSpace::theta_default(d);
    space.clip(&mut eta);

    let u = data.bounds.normalize(&data.x);
    let ctx = LikelihoodContext::new(
        KernelSpec::sq_exp(vec![F::one(); d]),
        &u.view(),
        data.y.clone(),
    )?;
    let stage1_cll_dspace = ctx.eval(&eta)?.cll;

    let objective = |theta: &[F]| -> Result<F> {
        let st = ctx.eval(theta)?;
        if st.degenerate {
            return Err(Error::DegenerateResponse("degenerate variance".into()));
        }
        Ok(st.cll)
    };
    let gradient = |theta: &[F]| -> Result<Vec<F>> {
        Ok(ctx.concentrated_ll_grad(theta)?.to_vec())
    };
    let budget = usize::max(100, 10 * d);
    let opt = maximize_gradient_based(objective, gradient, &eta, &space, budget)?;

    let state = ctx.eval(&opt.theta)?;
    let mut spec = KernelSpec::sq_exp(opt.theta.clone());
    spec.nugget = state.corr.nugget_used;
    Ok(build_surrogate(
        ModelKind::Kplsk,
        spec,
        data.bounds.clone(),
        u,
        data.y.clone(),
        state,
        FitMeta {
            h: Some(h),
            m: None,
            fota_step: None,
            nugget_used: 0.0,
            fit_seconds: started.elapsed().as_secs_f64(),
            cll: 0.0,
            stage1_cll: Some(stage1_cll_dspace.to_f64().unwrap_or(f64::NAN)),
            seed,
        },
    ))
}

/// Indirect GEK: augment every sample with `d` forward Taylor points (one
/// per direction) and fit plain kriging on the n(d+1)-point system.
pub fn fit_gek_indirect<F: Scalar>(
    data: &TrainingData<F>,
    fota_step: F,
    seed: u64,
) -> Result<FittedSurrogate<F>> {
    fit_gek_indirect_with_cap(data, fota_step, seed, DEFAULT_GEK_ROW_CAP)
}

pub fn fit_gek_indirect_with_cap<F: Scalar>(
    data: &TrainingData<F>,
    fota_step: F,
    seed: u64,
    row_cap: usize,
) -> Result<FittedSurrogate<F>> {
    let started = Instant::now();
    data.require_distinct_rows()?;
    validate_fota_step(fota_step)?;
    let gu = data.normalized_gradients()?;
    let n = data.n();
    let d = data.dim();
    let rows = n * (d + 1);
    if rows > row_cap {
        return Err(Error::TooLarge { rows, cap: row_cap });
    }

    let u = data.bounds.normalize(&data.x);
    let mut points = Array2::zeros((rows, d));
    let mut values = Array1::zeros(rows);
    for i in 0..n {
        points.row_mut(i).assign(&u.row(i));
        values[i] = data.y[i];
    }
    let mut r = n;
    for i in 0..n {
        let base: Vec<F> = u.row(i).to_vec();
        let grad: Vec<F> = gu.row(i).to_vec();
        for j in 0..d {
            let mut offset = vec![F::zero(); d];
            offset[j] = fota_step;
            let (pt, val) = fota_extrapolate(&base, data.y[i], &grad, &offset);
            for k in 0..d {
                points[[r, k]] = pt[k];
            }
            values[r] = val;
            r += 1;
        }
    }

    optimize_and_finalize(
        FitShared {
            kind: ModelKind::GekIndirect,
            spec_template: KernelSpec::sq_exp(vec![F::one(); d]),
            points,
            values,
            gek_mode: None,
            seed,
            meta_h: None,
            meta_m: None,
            meta_fota: fota_step.to_f64(),
        },
        &data.bounds,
        started,
    )
}

/// Direct GEK: derivative observations enter the correlation system through
/// the block matrix; the response vector carries values then gradients.
pub fn fit_gek_direct<F: Scalar>(data: &TrainingData<F>, seed: u64) -> Result<FittedSurrogate<F>> {
    fit_gek_direct_with_cap(data, seed, DEFAULT_GEK_ROW_CAP)
}

pub fn fit_gek_direct_with_cap<F: Scalar>(
    data: &TrainingData<F>,
    seed: u64,
    row_cap: usize,
) -> Result<FittedSurrogate<F>> {
    let started = Instant::now();
    data.require_distinct_rows()?;
    let gu = data.normalized_gradients()?;
    let n = data.n();
    let d = data.dim();
    let rows = n * (d + 1);
    if rows > row_cap {
        return Err(Error::TooLarge { rows, cap: row_cap });
    }

    let u = data.bounds.normalize(&data.x);
    let mut values = Array1::zeros(rows);
    for i in 0..n {
        values[i] = data.y[i];
        for k in 0..d {
            values[n + i * d + k] = gu[[i, k]];
        }
    }

    optimize_and_finalize(
        FitShared {
            kind: ModelKind::GekDirect,
            spec_template: KernelSpec::sq_exp(vec![F::one(); d]),
            points: u,
            values,
            gek_mode: Some(GradBlockMode::Analytic),
            seed,
            meta_h: None,
            meta_m: None,
            meta_fota: None,
        },
        &data.bounds,
        started,
    )
}

/// Per-sample result of the local PLS stage.
struct LocalPlsOutcome<F> {
    abs_rotation_sums: Array2<F>,
    selected: Vec<Vec<usize>>,
}

/// Local PLS on the Taylor cloud around each sample: absolute rotation
/// coefficients are accumulated for averaging and the top-m first-component
/// directions recorded per sample.
fn local_pls_stage<F: Scalar>(
    u: &Array2<F>,
    y: &Array1<F>,
    gu: &Array2<F>,
    cfg: &GeKplsConfig<F>,
) -> Result<LocalPlsOutcome<F>> {
    let n = u.nrows();
    let d = u.ncols();
    let offsets = displacement_set::<F>(d);
    let n_local = offsets.len() + 1;
    if cfg.h > usize::min(n_local - 1, d) {
        return Err(Error::invalid(format!(
            "h={} too large for the local displacement design",
            cfg.h
        )));
    }

    let mut sums = Array2::zeros((d, cfg.h));
    let mut selected = Vec::with_capacity(n);
    let mut x_loc = Array2::zeros((n_local, d));
    let mut y_loc = Array1::zeros(n_local);
    for i in 0..n {
        let base: Vec<F> = u.row(i).to_vec();
        let grad: Vec<F> = gu.row(i).to_vec();
        x_loc.row_mut(0).assign(&u.row(i));
        y_loc[0] = y[i];
        for (k, off) in offsets.offsets.rows().into_iter().enumerate() {
            let offset: Vec<F> = off.iter().map(|o| *o * cfg.fota_step).collect();
            let (pt, val) = fota_extrapolate(&base, y[i], &grad, &offset);
            for j in 0..d {
                x_loc[[k + 1, j]] = pt[j];
            }
            y_loc[k + 1] = val;
        }
        let pls = fit_pls(&x_loc.view(), &y_loc.view(), cfg.h)?;
        for l in 0..cfg.h {
            for j in 0..d {
                sums[[j, l]] = sums[[j, l]] + pls.rotations[[j, l]].abs();
            }
        }
        let first: Vec<F> = (0..d).map(|j| pls.rotations[[j, 0]]).collect();
        selected.push(top_m_directions(&first, cfg.m));
    }
    Ok(LocalPlsOutcome {
        abs_rotation_sums: sums,
        selected,
    })
}

/// GE-KPLS: local PLS on Taylor clouds, averaged coefficients in the kernel,
/// and only the `m` most influential forward Taylor points kept per sample,
/// for an n(m+1)-row system with `h` hyperparameters.
pub fn fit_gekpls<F: Scalar>(
    data: &TrainingData<F>,
    cfg: &GeKplsConfig<F>,
    seed: u64,
) -> Result<FittedSurrogate<F>> {
    let started = Instant::now();
    data.require_distinct_rows()?;
    validate_fota_step(cfg.fota_step)?;
    let d = data.dim();
    if cfg.m == 0 || cfg.m > d {
        return Err(Error::invalid(format!(
            "extra point count m={} outside 1..=d={d}",
            cfg.m
        )));
    }
    let gu = data.normalized_gradients()?;
    let u = data.bounds.normalize(&data.x);
    let n = data.n();

    let local = local_pls_stage(&u, &data.y, &gu, cfg)?;
    let nf = F::from_usize(n).unwrap();
    let mut wav = local.abs_rotation_sums;
    for v in wav.iter_mut() {
        *v = *v / nf;
    }

    let rows = n * (cfg.m + 1);
    let mut points = Array2::zeros((rows, d));
    let mut values = Array1::zeros(rows);
    for i in 0..n {
        points.row_mut(i).assign(&u.row(i));
        values[i] = data.y[i];
    }
    let mut r = n;
    for i in 0..n {
        let base: Vec<F> = u.row(i).to_vec();
        let grad: Vec<F> = gu.row(i).to_vec();
        for &j in &local.selected[i] {
            let mut offset = vec![F::zero(); d];
            offset[j] = cfg.fota_step;
            let (pt, val) = fota_extrapolate(&base, data.y[i], &grad, &offset);
            for k in 0..d {
                points[[r, k]] = pt[k];
            }
            values[r] = val;
            r += 1;
        }
    }

    optimize_and_finalize(
        FitShared {
            kind: ModelKind::GeKpls,
            spec_template: KernelSpec::gekpls(vec![F::one(); cfg.h], wav),
            points,
            values,
            gek_mode: None,
            seed,
            meta_h: Some(cfg.h),
            meta_m: Some(cfg.m),
            meta_fota: cfg.fota_step.to_f64(),
        },
        &data.bounds,
        started,
    )
}

fn validate_fota_step<F: Scalar>(step: F) -> Result<()> {
    let s = step.to_f64().unwrap_or(f64::NAN);
    if !(s > 0.0 && s < 0.1) {
        return Err(Error::invalid(format!(
            "Taylor step {s} outside (0, 0.1)"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Serialization: versioned JSON document.
// ---------------------------------------------------------------------------

/// Wire format for a fitted model. Rebuilding the factor from the stored
/// points, hyperparameters and nugget reproduces predictions exactly.
#[derive(Debug, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ModelDocument<F: Scalar> {
    pub version: u32,
    pub kind: ModelKind,
    pub bounds: Bounds<F>,
    pub variant: KernelVariant<F>,
    pub nugget: F,
    pub mu_hat: F,
    pub sigma2_hat: F,
    pub train_points: Vec<Vec<F>>,
    pub train_values: Vec<F>,
    pub meta: FitMeta,
}

pub const MODEL_DOCUMENT_VERSION: u32 = 1;

impl<F: Scalar> FittedSurrogate<F> {
    pub fn to_document(&self) -> ModelDocument<F> {
        ModelDocument {
            version: MODEL_DOCUMENT_VERSION,
            kind: self.kind,
            bounds: self.bounds.clone(),
            variant: self.spec.variant.clone(),
            nugget: self.spec.nugget,
            mu_hat: self.mu_hat,
            sigma2_hat: self.sigma2_hat,
            train_points: self
                .train_points
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            train_values: self.train_values.to_vec(),
            meta: self.meta.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_document(doc: ModelDocument<F>) -> Result<Self> {
        if doc.version != MODEL_DOCUMENT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model document version {}",
                doc.version
            )));
        }
        let n = doc.train_points.len();
        if n == 0 {
            return Err(Error::invalid("model document has no training points"));
        }
        let d = doc.train_points[0].len();
        let mut points = Array2::zeros((n, d));
        for (i, row) in doc.train_points.iter().enumerate() {
            if row.len() != d {
                return Err(Error::invalid("ragged training point rows"));
            }
            for j in 0..d {
                points[[i, j]] = row[j];
            }
        }
        let values = Array1::from_vec(doc.train_values.clone());
        let spec = KernelSpec {
            variant: doc.variant.clone(),
            nugget: doc.nugget,
        };
        spec.validate()?;

        // Rebuild the factorized state; the ladder starts at the stored
        // nugget, which succeeded at fit time, so the factor is identical.
        let policy = NuggetPolicy::default();
        let corr = match doc.kind {
            ModelKind::GekDirect => {
                let raw =
                    crate::kernels::gek_raw_matrix(&spec, &points.view(), GradBlockMode::Analytic)?;
                crate::kernels::factor_with_ladder(raw, spec.nugget, &policy)?
            }
            _ => {
                let comps = crate::kernels::PairComponents::from_points(&spec, &points.view());
                comps.assemble(spec.theta(), spec.nugget, &policy)?
            }
        };
        let sys = values.len();
        let mut ones = Array1::zeros(sys);
        match doc.kind {
            ModelKind::GekDirect => {
                for i in 0..n {
                    ones[i] = F::one();
                }
            }
            _ => {
                for i in 0..sys {
                    ones[i] = F::one();
                }
            }
        }
        let e: Array1<F> = (0..sys)
            .map(|i| values[i] - ones[i] * doc.mu_hat)
            .collect();
        let alpha = corr.chol.solve_vec(&e.view());
        let rinv_ones = corr.chol.solve_vec(&ones.view());
        let ones_rinv_ones = ones
            .iter()
            .zip(rinv_ones.iter())
            .map(|(a, b)| *a * *b)
            .sum();

        Ok(FittedSurrogate {
            kind: doc.kind,
            spec,
            bounds: doc.bounds,
            mu_hat: doc.mu_hat,
            sigma2_hat: doc.sigma2_hat,
            train_points: points,
            train_values: values,
            meta: doc.meta,
            chol: corr.chol,
            alpha,
            rinv_ones,
            ones_rinv_ones,
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument<F> = serde_json::from_str(s)?;
        Self::from_document(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn fota_values() {
        let (_, v) = fota_extrapolate(&[0.0f64], 4.0, &[4.0], &[0.1]);
        assert!((v - 4.4).abs() < 1e-15);
        let (_, v) = fota_extrapolate(&[0.0f64], 4.0, &[4.0], &[0.0]);
        assert_eq!(v, 4.0);
        // value 2 at (1,1) with gradient (2,2) and offset (0.1, -0.1)
        let (pt, v) = fota_extrapolate(&[1.0f64, 1.0], 2.0, &[2.0, 2.0], &[0.1, -0.1]);
        assert!((v - 2.0).abs() < 1e-15);
        assert!((pt[0] - 1.1).abs() < 1e-15 && (pt[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn top_m_selection() {
        let coeffs = [0.9, 0.1, 0.4f64];
        assert_eq!(top_m_directions(&coeffs, 2), vec![0, 2]);
        // ties break to the lower index
        let tied = [0.5, 0.5, 0.1f64];
        assert_eq!(top_m_directions(&tied, 1), vec![0]);
        // brute-force comparison on random vectors happens in the
        // acceptance suite
    }

    #[test]
    fn eta_change_of_variables_arithmetic() {
        let spec = KernelSpec::kpls(vec![2.0f64], array![[0.6], [0.8]]);
        let eta = spec.effective_full_theta();
        assert!((eta[0] - 0.72).abs() < 1e-15);
        assert!((eta[1] - 1.28).abs() < 1e-15);
    }

    #[test]
    fn duplicate_rows_rejected() {
        let b = Bounds::new(vec![0.0], vec![1.0]).unwrap();
        let data = TrainingData::new(array![[0.5], [0.5]], array![1.0, 2.0], b).unwrap();
        assert!(matches!(
            fit_kriging(&data, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn gradient_models_require_gradients() {
        let b = Bounds::new(vec![0.0], vec![1.0]).unwrap();
        let data = TrainingData::new(array![[0.2], [0.8]], array![1.0, 2.0], b).unwrap();
        assert!(fit_gek_direct(&data, 0).is_err());
        assert!(fit_gek_indirect(&data, 1e-4, 0).is_err());
        assert!(fit_gekpls(&data, &GeKplsConfig::default(), 0).is_err());
    }

    #[test]
    fn gek_row_cap_enforced() {
        let b = Bounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let data = TrainingData::with_gradients(
            array![[0.2, 0.3], [0.8, 0.6]],
            array![1.0, 2.0],
            array![[0.1, 0.2], [0.3, 0.4]],
            b,
        )
        .unwrap();
        assert!(matches!(
            fit_gek_indirect_with_cap(&data, 1e-4, 0, 5),
            Err(Error::TooLarge { rows: 6, cap: 5 })
        ));
        assert!(matches!(
            fit_gek_direct_with_cap(&data, 0, 5),
            Err(Error::TooLarge { rows: 6, cap: 5 })
        ));
    }

    #[test]
    fn invalid_gekpls_configs_rejected() {
        let b = Bounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let data = TrainingData::with_gradients(
            array![[0.2, 0.3], [0.8, 0.6], [0.4, 0.9]],
            array![1.0, 2.0, 0.5],
            array![[0.1, 0.2], [0.3, 0.4], [0.0, 1.0]],
            b,
        )
        .unwrap();
        let cfg = GeKplsConfig::new(1, 3, 1e-4); // m > d
        assert!(matches!(
            fit_gekpls(&data, &cfg, 0),
            Err(Error::InvalidArgument(_))
        ));
        let cfg = GeKplsConfig::new(1, 1, 0.5); // step too large
        assert!(fit_gekpls(&data, &cfg, 0).is_err());
    }

    #[test]
    fn constant_response_is_degenerate() {
        let b = Bounds::new(vec![0.0], vec![1.0]).unwrap();
        let data = TrainingData::new(array![[0.1], [0.9]], array![3.0, 3.0], b).unwrap();
        assert!(matches!(
            fit_kriging(&data, 0),
            Err(Error::DegenerateResponse(_))
        ));
    }
}
