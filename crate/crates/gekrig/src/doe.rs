//! Sampling plans and local displacement designs.
//!
//! Latin hypercube plans drive both training designs (maximin criterion) and
//! validation sets (random criterion). Displacement sets describe the unit
//! offsets used to scatter Taylor-approximated points around a sample:
//! a Box-Behnken design for `d >= 3`, forward/backward steps otherwise.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Scalar;

/// Hypercube domain, the product of per-direction intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds<F> {
    pub lower: Vec<F>,
    pub upper: Vec<F>,
}

impl<F: Scalar> Bounds<F> {
    pub fn new(lower: Vec<F>, upper: Vec<F>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::invalid("bounds must be non-empty and of equal length"));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(format!(
                    "degenerate bounds in direction {j}: [{lo}, {hi}]"
                )));
            }
        }
        Ok(Bounds { lower, upper })
    }

    /// Unit hypercube in `d` dimensions.
    pub fn unit(d: usize) -> Self {
        Bounds {
            lower: vec![F::zero(); d],
            upper: vec![F::one(); d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn range(&self, j: usize) -> F {
        self.upper[j] - self.lower[j]
    }

    /// Map a physical point into the unit hypercube.
    pub fn normalize_point(&self, x: &[F], out: &mut [F]) {
        for j in 0..self.dim() {
            out[j] = (x[j] - self.lower[j]) / self.range(j);
        }
    }

    /// Row-wise normalization of an n×d matrix.
    pub fn normalize(&self, x: &Array2<F>) -> Array2<F> {
        let mut u = x.clone();
        for mut row in u.rows_mut() {
            for j in 0..self.dim() {
                row[j] = (row[j] - self.lower[j]) / self.range(j);
            }
        }
        u
    }

    pub fn contains(&self, x: &[F]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn midpoint(&self) -> Vec<F> {
        let half = F::cast(0.5);
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (*lo + *hi) * half)
            .collect()
    }
}

/// How a Latin hypercube plan is selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    /// Best-of-pool plan maximizing the minimum pairwise distance.
    Maximin,
    /// Plain stratified plan, used for validation sets.
    Random,
}

/// A Latin hypercube sampling plan in physical coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingPlan<F> {
    pub points: Array2<F>,
    pub criterion: Criterion,
    pub seed: u64,
}

/// Number of candidate plans scanned for the maximin criterion.
pub const DEFAULT_MAXIMIN_POOL: usize = 50;

/// Generate a Latin hypercube plan with the default maximin pool size.
pub fn lhs<F: Scalar>(
    n: usize,
    bounds: &Bounds<F>,
    criterion: Criterion,
    seed: u64,
) -> Result<SamplingPlan<F>> {
    lhs_with_pool(n, bounds, criterion, seed, DEFAULT_MAXIMIN_POOL)
}

/// Generate a Latin hypercube plan, with an explicit maximin pool size.
pub fn lhs_with_pool<F: Scalar>(
    n: usize,
    bounds: &Bounds<F>,
    criterion: Criterion,
    seed: u64,
    pool: usize,
) -> Result<SamplingPlan<F>> {
    if n < 2 {
        return Err(Error::invalid(format!("LHS needs n >= 2 points, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = match criterion {
        Criterion::Random => unit_lhs(n, bounds.dim(), &mut rng),
        Criterion::Maximin => {
            let pool = pool.max(1);
            let mut best: Option<(F, Array2<F>)> = None;
            for _ in 0..pool {
                let cand = unit_lhs(n, bounds.dim(), &mut rng);
                let dist = min_pairwise_distance(&cand);
                match &best {
                    Some((d, _)) if *d >= dist => {}
                    _ => best = Some((dist, cand)),
                }
            }
            best.expect("pool is non-empty").1
        }
    };
    let mut points = unit;
    for mut row in points.rows_mut() {
        for j in 0..bounds.dim() {
            row[j] = bounds.lower[j] + row[j] * bounds.range(j);
        }
    }
    Ok(SamplingPlan {
        points,
        criterion,
        seed,
    })
}

/// One stratified sample per dimension: stratum permutation plus a uniform
/// jitter inside each stratum.
fn unit_lhs<F: Scalar>(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<F> {
    let mut pts = Array2::zeros((n, d));
    let nf = F::from_usize(n).unwrap();
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..d {
        strata.shuffle(rng);
        for i in 0..n {
            let u: F = rng.random_range(F::zero()..F::one());
            pts[[i, j]] = (F::from_usize(strata[i]).unwrap() + u) / nf;
        }
    }
    pts
}

/// Minimum pairwise Euclidean distance, computed in unit coordinates.
pub fn min_pairwise_distance<F: Scalar>(points: &Array2<F>) -> F {
    let n = points.nrows();
    let mut best = F::infinity();
    for i in 0..n {
        for j in i + 1..n {
            let mut s = F::zero();
            for k in 0..points.ncols() {
                let t = points[[i, k]] - points[[j, k]];
                s = s + t * t;
            }
            best = best.min(s);
        }
    }
    best.sqrt()
}

/// Shape of a displacement design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DisplacementKind {
    /// All ±1 sign pairs over all coordinate pairs; 4·C(d,2) offsets.
    BoxBehnken,
    /// ±1 along each axis; 2d offsets.
    ForwardBackward,
}

/// Unit-scale offsets around a sampling point. Physical steps are applied by
/// the caller.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisplacementSet<F> {
    pub offsets: Array2<F>,
    pub kind: DisplacementKind,
}

impl<F: Scalar> DisplacementSet<F> {
    pub fn len(&self) -> usize {
        self.offsets.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.nrows() == 0
    }
}

/// Offsets for the Taylor point cloud around a sample: Box-Behnken when
/// `d >= 3`, forward/backward axis steps otherwise. The center point is not
/// part of the set.
pub fn displacement_set<F: Scalar>(d: usize) -> DisplacementSet<F> {
    assert!(d >= 1, "dimension must be at least 1");
    if d >= 3 {
        let m = 4 * d * (d - 1) / 2;
        let mut offsets = Array2::zeros((m, d));
        let signs = [
            (F::one(), F::one()),
            (F::one(), -F::one()),
            (-F::one(), F::one()),
            (-F::one(), -F::one()),
        ];
        let mut r = 0;
        for a in 0..d {
            for b in a + 1..d {
                for (sa, sb) in signs {
                    offsets[[r, a]] = sa;
                    offsets[[r, b]] = sb;
                    r += 1;
                }
            }
        }
        DisplacementSet {
            offsets,
            kind: DisplacementKind::BoxBehnken,
        }
    } else {
        let mut offsets = Array2::zeros((2 * d, d));
        for a in 0..d {
            offsets[[2 * a, a]] = F::one();
            offsets[[2 * a + 1, a]] = -F::one();
        }
        DisplacementSet {
            offsets,
            kind: DisplacementKind::ForwardBackward,
        }
    }
}
