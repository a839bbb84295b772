//! Benchmark functions with gradients: two analytic families of arbitrary
//! dimension and eight engineering problems, plus the relative-error metric.
//!
//! Engineering formulas are implemented as printed in their source, including
//! a few physically suspect terms, behind the default [`EvalMode::AsPrinted`];
//! [`EvalMode::Corrected`] restores the fourth-power shaft diameter in the
//! torsional stiffness of `P8` for users who want physical behavior.
//! Engineering gradients are central finite differences with a step of 1e-6
//! of each coordinate's range; the analytic families carry exact gradients.

use serde::{Deserialize, Serialize};

use crate::doe::Bounds;
use crate::error::{Error, Result};
use crate::Scalar;

/// Which benchmark function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchmarkId {
    Y1,
    Y2,
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
    P7,
    P8,
}

/// Formula fidelity switch; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EvalMode {
    #[default]
    AsPrinted,
    Corrected,
}

/// A benchmark function instance: id, dimension, domain and evaluation mode.
#[derive(Debug, Clone)]
pub struct BenchmarkFunction<F> {
    pub id: BenchmarkId,
    pub d: usize,
    pub bounds: Bounds<F>,
    pub mode: EvalMode,
}

/// Gravitational acceleration for the torsion-vibration mass terms, in/s²;
/// the problem data are in inch-pound units.
const GRAVITY: f64 = 386.4;

/// Relative FD step for engineering gradients, as a fraction of each range.
const FD_STEP_REL: f64 = 1e-6;

impl<F: Scalar> BenchmarkFunction<F> {
    /// One of the analytic families at the requested dimension.
    pub fn analytic(id: BenchmarkId, d: usize) -> Result<Self> {
        match id {
            BenchmarkId::Y1 | BenchmarkId::Y2 => {}
            _ => return Err(Error::invalid("analytic() takes Y1 or Y2")),
        }
        if d == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let bounds = Bounds::new(vec![F::cast(-10.0); d], vec![F::cast(10.0); d])?;
        Ok(BenchmarkFunction {
            id,
            d,
            bounds,
            mode: EvalMode::AsPrinted,
        })
    }

    /// One of the engineering problems at its fixed dimension.
    pub fn engineering(id: BenchmarkId) -> Result<Self> {
        let ranges: Vec<(f64, f64)> = match id {
            BenchmarkId::Y1 | BenchmarkId::Y2 => {
                return Err(Error::invalid("engineering() takes P1..P8"))
            }
            // (b, t)
            BenchmarkId::P1 | BenchmarkId::P2 => vec![(0.1, 1.0), (5.0, 10.0)],
            // (h, b, l, t)
            BenchmarkId::P3 => vec![(0.125, 1.0), (0.1, 1.0), (5.0, 10.0), (5.0, 10.0)],
            // (r_w, T_u, T_l, L, r, H_u, H_l, K_w)
            BenchmarkId::P4 => vec![
                (0.05, 0.15),
                (63070.0, 115600.0),
                (63.1, 116.0),
                (1120.0, 1680.0),
                (100.0, 50000.0),
                (990.0, 1110.0),
                (700.0, 820.0),
                (9855.0, 12045.0),
            ],
            // (L1..L4, θ1..θ4)
            BenchmarkId::P5 => {
                let mut r = vec![(0.0, 1.0); 4];
                r.extend(vec![(0.0, 2.0 * std::f64::consts::PI); 4]);
                r
            }
            // (S_w, A, q, tc, W_dg, W_fw, Λ, λ, N_z, W_p)
            BenchmarkId::P6 => vec![
                (150.0, 200.0),
                (6.0, 10.0),
                (16.0, 45.0),
                (0.08, 0.18),
                (1700.0, 2500.0),
                (220.0, 300.0),
                (-10.0, 10.0),
                (0.5, 1.0),
                (2.5, 6.0),
                (0.025, 0.08),
            ],
            // (d1, d2, d3, D1, ρ1, t2, L1, λ1, L2, λ2, L3, λ3, t1, D2, ρ2)
            BenchmarkId::P7 => vec![
                (1.8, 2.2),
                (1.638, 2.002),
                (2.025, 2.475),
                (10.8, 13.2),
                (0.252, 0.308),
                (3.6, 4.4),
                (9.0, 11.0),
                (0.252, 0.308),
                (10.8, 13.2),
                (0.144, 0.176),
                (7.2, 8.8),
                (0.09, 0.11),
                (2.7, 3.3),
                (12.6, 15.4),
                (0.09, 0.11),
            ],
            // (d1, G1, d2, G2, d3, G3, D1, ρ1, t2, L1, L2, L3, t1, D2, ρ2)
            BenchmarkId::P8 => vec![
                (1.8, 2.2),
                (105_300_000.0, 128_700_000.0),
                (1.638, 2.002),
                (5_580_000.0, 6_820_000.0),
                (2.025, 2.475),
                (3_510_000.0, 4_290_000.0),
                (10.8, 13.2),
                (0.252, 0.308),
                (3.6, 4.4),
                (9.0, 11.0),
                (10.8, 13.2),
                (7.2, 8.8),
                (2.7, 3.3),
                (12.6, 15.4),
                (0.09, 0.11),
            ],
        };
        let d = ranges.len();
        let bounds = Bounds::new(
            ranges.iter().map(|(lo, _)| F::cast(*lo)).collect(),
            ranges.iter().map(|(_, hi)| F::cast(*hi)).collect(),
        )?;
        Ok(BenchmarkFunction {
            id,
            d,
            bounds,
            mode: EvalMode::AsPrinted,
        })
    }

    pub fn with_mode(mut self, mode: EvalMode) -> Self {
        self.mode = mode;
        self
    }

    /// Parse a registry id: `"y1:20"`, `"y2:5"` or `"p4"`.
    pub fn from_registry_id(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("y1:") {
            let d: usize = rest
                .parse()
                .map_err(|_| Error::invalid(format!("bad dimension in '{s}'")))?;
            return Self::analytic(BenchmarkId::Y1, d);
        }
        if let Some(rest) = lower.strip_prefix("y2:") {
            let d: usize = rest
                .parse()
                .map_err(|_| Error::invalid(format!("bad dimension in '{s}'")))?;
            return Self::analytic(BenchmarkId::Y2, d);
        }
        let id = match lower.as_str() {
            "p1" => BenchmarkId::P1,
            "p2" => BenchmarkId::P2,
            "p3" => BenchmarkId::P3,
            "p4" => BenchmarkId::P4,
            "p5" => BenchmarkId::P5,
            "p6" => BenchmarkId::P6,
            "p7" => BenchmarkId::P7,
            "p8" => BenchmarkId::P8,
            _ => {
                return Err(Error::invalid(format!(
                    "unknown function id '{s}' (expected y1:<d>, y2:<d>, or p1..p8)"
                )))
            }
        };
        Self::engineering(id)
    }

    pub fn registry_id(&self) -> String {
        match self.id {
            BenchmarkId::Y1 => format!("y1:{}", self.d),
            BenchmarkId::Y2 => format!("y2:{}", self.d),
            BenchmarkId::P1 => "p1".into(),
            BenchmarkId::P2 => "p2".into(),
            BenchmarkId::P3 => "p3".into(),
            BenchmarkId::P4 => "p4".into(),
            BenchmarkId::P5 => "p5".into(),
            BenchmarkId::P6 => "p6".into(),
            BenchmarkId::P7 => "p7".into(),
            BenchmarkId::P8 => "p8".into(),
        }
    }

    /// Whether this id uses exact gradients (analytic families) or FD.
    pub fn has_analytic_gradient(&self) -> bool {
        matches!(self.id, BenchmarkId::Y1 | BenchmarkId::Y2)
    }

    /// Evaluate at a point inside the domain.
    pub fn eval(&self, x: &[F]) -> Result<F> {
        if x.len() != self.d {
            return Err(Error::invalid(format!(
                "point has {} coordinates, function takes {}",
                x.len(),
                self.d
            )));
        }
        if !self.bounds.contains(x) {
            return Err(Error::invalid("point outside the function domain"));
        }
        self.eval_raw(x)
    }

    /// Gradient at a point inside the domain.
    pub fn grad(&self, x: &[F]) -> Result<Vec<F>> {
        if x.len() != self.d {
            return Err(Error::invalid("dimension mismatch"));
        }
        if !self.bounds.contains(x) {
            return Err(Error::invalid("point outside the function domain"));
        }
        match self.id {
            BenchmarkId::Y1 => Ok(x.iter().map(|v| F::cast(2.0) * *v).collect()),
            BenchmarkId::Y2 => {
                let mut g: Vec<F> = x.iter().map(|v| F::cast(2.0) * *v).collect();
                g[0] = F::cast(3.0) * x[0] * x[0];
                Ok(g)
            }
            _ => self.fd_grad(x),
        }
    }

    /// Central finite differences, step 1e-6 of each range. Uses the
    /// unchecked evaluation so boundary points can be differentiated.
    fn fd_grad(&self, x: &[F]) -> Result<Vec<F>> {
        let mut g = Vec::with_capacity(self.d);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        for j in 0..self.d {
            let h = self.bounds.range(j) * F::cast(FD_STEP_REL);
            xp[j] = x[j] + h;
            xm[j] = x[j] - h;
            let fp = self.eval_raw(&xp)?;
            let fm = self.eval_raw(&xm)?;
            g.push((fp - fm) / (h + h));
            xp[j] = x[j];
            xm[j] = x[j];
        }
        Ok(g)
    }

    /// Formula evaluation without the domain check.
    pub(crate) fn eval_raw(&self, x: &[F]) -> Result<F> {
        let v = match self.id {
            BenchmarkId::Y1 => x.iter().map(|v| *v * *v).sum(),
            BenchmarkId::Y2 => {
                let head = x[0] * x[0] * x[0];
                let tail: F = x[1..].iter().map(|v| *v * *v).sum();
                head + tail
            }
            BenchmarkId::P1 => {
                // δ = 2.1952 / (t³ b), variables (b, t)
                let (b, t) = (x[0], x[1]);
                F::cast(2.1952) / (t * t * t * b)
            }
            BenchmarkId::P2 => {
                // σ = 504000 / (t² b)
                let (b, t) = (x[0], x[1]);
                F::cast(504000.0) / (t * t * b)
            }
            BenchmarkId::P3 => {
                // τ with variables (h, b, l, t); b does not enter the formula
                let (h, l, t) = (x[0], x[2], x[3]);
                let tau1 = F::cast(6000.0) / (F::cast(2.0).sqrt() * h * l);
                let quart = F::cast(0.25) * (l * l + (h + t) * (h + t));
                let tau2 = F::cast(6000.0) * (F::cast(14.0) + F::cast(0.5) * l) * quart.sqrt()
                    / (F::cast(2.0)
                        * (F::cast(0.707)
                            * h
                            * l
                            * (l * l / F::cast(12.0) + F::cast(0.25) * (h + t) * (h + t))));
                let num = tau1 * tau1 + tau2 * tau2 + l * tau1 * tau2;
                (num / quart.sqrt()).sqrt()
            }
            BenchmarkId::P4 => {
                let (rw, tu, tl, lp, r, hu, hl, kw) =
                    (x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7]);
                let lg = (r / rw).ln();
                let two_pi = F::cast(2.0 * std::f64::consts::PI);
                two_pi * tu * (hu - hl)
                    / (lg
                        * (F::one()
                            + F::cast(2.0) * lp * tu / (lg * rw * rw * kw)
                            + tu / tl))
            }
            BenchmarkId::P5 => {
                let mut cx = F::zero();
                let mut cy = F::zero();
                let mut angle = F::zero();
                for i in 0..4 {
                    angle = angle + x[4 + i];
                    cx = cx + x[i] * angle.cos();
                    cy = cy + x[i] * angle.sin();
                }
                (cx * cx + cy * cy).sqrt()
            }
            BenchmarkId::P6 => {
                let (sw, a, q, tc, wdg, wfw, lam_sweep, lam, nz, wp) = (
                    x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8], x[9],
                );
                // sweep angle is given in degrees
                let rad = lam_sweep * F::cast(std::f64::consts::PI / 180.0);
                let cosl = rad.cos();
                F::cast(0.036)
                    * sw.powf(F::cast(0.758))
                    * wfw.powf(F::cast(0.0035))
                    * (a / (cosl * cosl))
                    * q.powf(F::cast(0.006))
                    * lam.powf(F::cast(0.04))
                    * (F::cast(100.0) * tc / cosl).powf(F::cast(-0.3))
                    * (nz * wdg).powf(F::cast(0.49))
                    + sw * wp
            }
            BenchmarkId::P7 => {
                let (d1, d2, d3, dd1, rho1, t2, l1, lam1, l2, lam2, l3, lam3, t1, dd2, rho2) = (
                    x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8], x[9], x[10], x[11],
                    x[12], x[13], x[14],
                );
                let pi = F::cast(std::f64::consts::PI);
                let quarter = F::cast(0.25);
                lam1 * pi * l1 * d1 * d1 * quarter
                    + lam2 * pi * l2 * d2 * d2 * quarter
                    + lam3 * pi * l3 * d3 * d3 * quarter
                    + rho1 * pi * t1 * dd1 * dd1 * quarter
                    + rho2 * pi * t2 * dd2 * dd2 * quarter
            }
            BenchmarkId::P8 => {
                let (d1, g1, d2, g2, d3, g3, dd1, rho1, t2, l1, l2, l3, t1, dd2, rho2) = (
                    x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8], x[9], x[10], x[11],
                    x[12], x[13], x[14],
                );
                let pi = F::cast(std::f64::consts::PI);
                let stiff = |g: F, d: F, l: F| -> F {
                    let diam = match self.mode {
                        EvalMode::AsPrinted => d,
                        EvalMode::Corrected => d * d * d * d,
                    };
                    pi * g * diam / (F::cast(32.0) * l)
                };
                let k1 = stiff(g1, d1, l1);
                let k2 = stiff(g2, d2, l2);
                let k3 = stiff(g3, d3, l3);
                let grav = F::cast(GRAVITY);
                let m1 = rho1 * pi * t1 * dd1 / (F::cast(4.0) * grav);
                let m2 = rho2 * pi * t2 * dd2 / (F::cast(4.0) * grav);
                let j1 = F::cast(0.5) * m1 * dd1 / F::cast(2.0);
                let j2 = F::cast(0.5) * m2 * dd2 / F::cast(2.0);
                let b = -((k1 + k2) / j1 + (k2 + k3) / j2);
                let c = (k1 * k2 + k2 * k3 + k3 * k1) / (j1 * j2);
                let disc = b * b - F::cast(4.0) * c;
                if disc < F::zero() {
                    return Err(Error::DomainError(format!(
                        "negative frequency discriminant {disc}"
                    )));
                }
                let inner = (-b - disc.sqrt()) / F::cast(2.0);
                if inner < F::zero() {
                    return Err(Error::DomainError(format!(
                        "negative squared frequency {inner}"
                    )));
                }
                inner.sqrt() / (F::cast(2.0) * pi)
            }
        };
        if !v.is_finite() {
            return Err(Error::DomainError(format!(
                "{} evaluated to a non-finite value",
                self.registry_id()
            )));
        }
        Ok(v)
    }
}

/// Relative L2 error between reference and predicted responses,
/// `‖y − ŷ‖₂ / ‖y‖₂`.
pub fn relative_error<F: Scalar>(y_true: &[F], y_hat: &[F]) -> Result<F> {
    if y_true.len() != y_hat.len() {
        return Err(Error::invalid("length mismatch in relative error"));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("empty vectors in relative error"));
    }
    let norm: F = y_true.iter().map(|v| *v * *v).sum::<F>().sqrt();
    if !(norm > F::zero()) {
        return Err(Error::invalid("reference vector has zero norm"));
    }
    let err: F = y_true
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (*a - *b) * (*a - *b))
        .sum::<F>()
        .sqrt();
    Ok(err / norm)
}
