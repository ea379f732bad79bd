//! Analytic second moments and variances of `Z = f¹(ω,x) f²(ω,y)`, the
//! pair-averaged objectives, and Monte Carlo estimators to check them.

use rayon::prelude::*;

use crate::error::{Error, Result, MAX_EXPONENT};
use crate::features::{log_feature, eval_feature, DEParams, Family, Mechanism, Which};
use crate::kernel::{k_alpha, log_k_alpha, KernelSpec, PointSet};
use crate::linalg::{sample_gaussian, Matrix, Vector};
use crate::rng::Stream;

const CHUNK: usize = 8192;

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    /// `None` for trigonometric features, which have no closed form here.
    pub analytic_var: Option<f64>,
    pub empirical_var: Option<f64>,
    pub empirical_se: Option<f64>,
    pub kernel_value: f64,
    pub n_samples: Option<usize>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn check_pair(x: &[f64], y: &[f64], d: Option<usize>) -> Result<()> {
    if x.len() != y.len() || d.is_some_and(|d| d != x.len()) {
        return Err(Error::DimensionMismatch(format!(
            "x has length {}, y {}, parameters {:?}",
            x.len(),
            y.len(),
            d
        )));
    }
    Ok(())
}

/// `log E[Z²]` for GE features:
/// `d log((1-4a)/√(1-8a)) + 2(1-4a)/(1-8a) ‖x+y‖² - ‖x‖² - ‖y‖²`.
pub fn log_ge_second_moment(a: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, None)?;
    if !(1.0 - 8.0 * a > 0.0) {
        return Err(Error::InvalidParams(format!("A={a} violates 8A < 1")));
    }
    let d = x.len() as f64;
    let s: f64 = x.iter().zip(y).map(|(u, v)| (u + v) * (u + v)).sum();
    Ok(d * ((1.0 - 4.0 * a).ln() - 0.5 * (1.0 - 8.0 * a).ln())
        + 2.0 * (1.0 - 4.0 * a) / (1.0 - 8.0 * a) * s
        - dot(x, x)
        - dot(y, y))
}

/// Quadratic-form pieces of the dense second moment:
/// `log E[Z²] = c0 + xᵀG¹x + yᵀG²y + xᵀHy`.
struct DeMoment {
    c0: f64,
    g1: Matrix,
    g2: Matrix,
    h: Matrix,
}

impl DeMoment {
    fn new(p: &DEParams) -> Self {
        let d = p.dim();
        let w = Vector::from_iterator(d, p.a_diag.iter().map(|a| 1.0 / (1.0 - 8.0 * a)));
        let weighted = |b: &Matrix| Matrix::from_fn(d, d, |r, c| w[r] * b[(r, c)]);
        let log_det: f64 = p.a_diag.iter().map(|a| (1.0 - 8.0 * a).ln()).sum();
        Self {
            c0: 4.0 * p.log_det_d - 0.5 * log_det,
            g1: (&p.c1 + p.b1.transpose() * weighted(&p.b1)) * 2.0,
            g2: (&p.c2 + p.b2.transpose() * weighted(&p.b2)) * 2.0,
            h: p.b1.transpose() * weighted(&p.b2) * 4.0,
        }
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let xv = Vector::from_row_slice(x);
        let yv = Vector::from_row_slice(y);
        self.c0 + xv.dot(&(&self.g1 * &xv)) + yv.dot(&(&self.g2 * &yv)) + xv.dot(&(&self.h * &yv))
    }
}

/// `log E[Z²] = 4 log D - ½ log det(I-8A) + 2xᵀ(C¹ + B¹ᵀ(I-8A)⁻¹B¹)x
/// + 2yᵀ(C² + B²ᵀ(I-8A)⁻¹B²)y + 4xᵀB¹ᵀ(I-8A)⁻¹B²y`.
pub fn log_de_second_moment(p: &DEParams, x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, Some(p.dim()))?;
    Ok(DeMoment::new(p).eval(x, y))
}

/// `log E[Z²]` for any positive family.
pub fn log_second_moment(family: &Family, x: &[f64], y: &[f64]) -> Result<f64> {
    match family {
        Family::Trig => Err(Error::UnsupportedFamily("trig")),
        Family::Pos => log_ge_second_moment(0.0, x, y),
        Family::Ge(p) => {
            check_pair(x, y, Some(p.d_dim))?;
            log_ge_second_moment(p.a, x, y)
        }
        Family::Sade(p) => {
            check_pair(x, y, Some(p.ge.d_dim))?;
            let xs: Vec<f64> = x.iter().zip(p.psi.iter()).map(|(v, s)| v * s).collect();
            let ys: Vec<f64> = y.iter().zip(p.psi.iter()).map(|(v, s)| v / s).collect();
            log_ge_second_moment(p.ge.a, &xs, &ys)
        }
        Family::De(p) => log_de_second_moment(p, x, y),
    }
}

/// `exp(log_m2) - K²` evaluated as `K² expm1(log_m2 - 2 log K)`.
fn variance_from_log(log_m2: f64, log_k: f64) -> Result<f64> {
    if log_m2 > MAX_EXPONENT {
        return Err(Error::Overflow(log_m2));
    }
    let v = (2.0 * log_k).exp() * (log_m2 - 2.0 * log_k).exp_m1();
    Ok(if v < 0.0 && v > -1e-12 { 0.0 } else { v })
}

pub fn ge_variance(a: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    let lk = log_k_alpha(x, y, KernelSpec::SOFTMAX)?;
    variance_from_log(log_ge_second_moment(a, x, y)?, lk)
}

pub fn de_variance(p: &DEParams, x: &[f64], y: &[f64]) -> Result<f64> {
    let lk = log_k_alpha(x, y, KernelSpec::SOFTMAX)?;
    variance_from_log(log_de_second_moment(p, x, y)?, lk)
}

pub fn family_variance(family: &Family, x: &[f64], y: &[f64]) -> Result<f64> {
    let lk = log_k_alpha(x, y, KernelSpec::SOFTMAX)?;
    variance_from_log(log_second_moment(family, x, y)?, lk)
}

/// `log(Var / K²) = log expm1(log E[Z²] - 2 log K)`, finite even when the
/// variance itself would overflow.
pub fn log_relative_variance(family: &Family, x: &[f64], y: &[f64]) -> Result<f64> {
    let gap = log_second_moment(family, x, y)? - 2.0 * log_k_alpha(x, y, KernelSpec::SOFTMAX)?;
    Ok(if gap > 30.0 {
        gap + (-(-gap).exp()).ln_1p()
    } else {
        gap.exp_m1().ln()
    })
}

fn check_sets(xs: &PointSet, ys: &PointSet) -> Result<()> {
    if xs.dim() != ys.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point sets of dimension {} and {}",
            xs.dim(),
            ys.dim()
        )));
    }
    Ok(())
}

/// `L⁻² Σᵢⱼ log E[Z(xᵢ, yⱼ)²]` summed over every pair.
pub fn shifted_logvar_objective(mech: &Mechanism, xs: &PointSet, ys: &PointSet) -> Result<f64> {
    check_sets(xs, ys)?;
    let d = xs.dim();
    let pairs = (xs.len() * ys.len()) as f64;
    match &mech.family {
        Family::Trig => Err(Error::UnsupportedFamily("trig")),
        Family::Pos | Family::Ge(_) | Family::Sade(_) => {
            let mut total = 0.0;
            for i in 0..xs.len() {
                let x = xs.row(i);
                for j in 0..ys.len() {
                    total += log_second_moment(&mech.family, x.as_slice(), ys.row(j).as_slice())?;
                }
            }
            Ok(total / pairs)
        }
        Family::De(p) => {
            if p.dim() != d {
                return Err(Error::DimensionMismatch(format!(
                    "parameters d={}, data d={d}",
                    p.dim()
                )));
            }
            let m = DeMoment::new(p);
            let x = xs.matrix();
            let y = ys.matrix();
            let xg = x * &m.g1;
            let yg = y * &m.g2;
            let u: Vec<f64> = (0..x.nrows()).map(|i| x.row(i).dot(&xg.row(i))).collect();
            let v: Vec<f64> = (0..y.nrows()).map(|j| y.row(j).dot(&yg.row(j))).collect();
            let cross = (x * &m.h) * y.transpose();
            let mut total = 0.0;
            for j in 0..y.nrows() {
                for i in 0..x.nrows() {
                    total += m.c0 + u[i] + v[j] + cross[(i, j)];
                }
            }
            Ok(total / pairs)
        }
    }
}

/// `Σᵢⱼ Var Z(xᵢ, yⱼ)`; overflows for large exponents.
pub fn mse_objective(mech: &Mechanism, xs: &PointSet, ys: &PointSet) -> Result<f64> {
    check_sets(xs, ys)?;
    let mut total = 0.0;
    for i in 0..xs.len() {
        let x = xs.row(i);
        for j in 0..ys.len() {
            total += family_variance(&mech.family, x.as_slice(), ys.row(j).as_slice())?;
        }
    }
    Ok(total)
}

/// Samples of `Z = f¹(ω,x) f²(ω,y)` over `n` iid draws. Chunk `c` uses
/// the substream `rng.split(c)`, so the result does not depend on the
/// number of threads.
pub fn sample_products(mech: &Mechanism, x: &[f64], y: &[f64], n: usize, rng: &Stream) -> Result<Vec<f64>> {
    check_pair(x, y, mech.family.dim())?;
    let d = x.len();
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Result<Vec<f64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut sub = rng.split(c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            let mut draws = sample_gaussian(len, d, &mut sub)?;
            if matches!(mech.family, Family::Trig) {
                draws = draws.with_phases(&mut sub);
            }
            (0..len)
                .map(|r| {
                    let w: Vec<f64> = draws.omegas.row(r).iter().copied().collect();
                    match &mech.family {
                        Family::Trig => {
                            let th = draws.phases.as_ref().map(|p| p[r]);
                            Ok(eval_feature(mech, &w, th, x, Which::First)?
                                * eval_feature(mech, &w, th, y, Which::Second)?)
                        }
                        f => {
                            let l = log_feature(f, &w, x, Which::First)? + log_feature(f, &w, y, Which::Second)?;
                            crate::error::checked_exp(l)
                        }
                    }
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Sample mean, sample variance and the standard error of each.
pub fn sample_summary(z: &[f64]) -> (f64, f64, f64, f64) {
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in z {
        let c = (v - mean) * (v - mean);
        m2 += c;
        m4 += c * c;
    }
    m2 /= n;
    m4 /= n;
    let var = m2 * n / (n - 1.0);
    let se_mean = (var / n).sqrt();
    let se_var = ((m4 - m2 * m2).max(0.0) / n).sqrt();
    (mean, se_mean, var, se_var)
}

pub fn empirical_variance(mech: &Mechanism, x: &[f64], y: &[f64], n: usize, rng: &Stream) -> Result<VarianceReport> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {n}")));
    }
    let z = sample_products(mech, x, y, n, rng)?;
    let (_, _, var, se) = sample_summary(&z);
    let analytic_var = match mech.family {
        Family::Trig => None,
        ref f => Some(family_variance(f, x, y)?),
    };
    Ok(VarianceReport {
        analytic_var,
        empirical_var: Some(var),
        empirical_se: Some(se),
        kernel_value: k_alpha(x, y, KernelSpec::SOFTMAX)?,
        n_samples: Some(n),
    })
}
