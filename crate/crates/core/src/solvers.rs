//! Closed-form parameter fits minimizing the shifted log-variance
//! objective averaged over data pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DEParams, GEParams, SADEParams};
use crate::kernel::MomentStats;
use crate::linalg::{eig_apply, svd, sym_eig_psd, Matrix, SymEig, Vector};

const PHI_CLAMP: f64 = 1e-10;
const SINGULAR_REL: f64 = 1e-10;
const SIGMA_REL: f64 = 1e-12;
const RIDGE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitFamily {
    Gerf,
    Saderf,
    Aderf,
    Sderf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub phi: f64,
    pub sigma_diag: Option<Vec<f64>>,
    pub lam3: Option<Vec<f64>>,
    pub objective_value: f64,
    pub family: FitFamily,
}

/// `f(A) = log(1-4A) - ½ log(1-8A) + φ/(1-8A)`.
pub fn scalar_objective(a: f64, phi: f64) -> f64 {
    (1.0 - 4.0 * a).ln() - 0.5 * (1.0 - 8.0 * a).ln() + phi / (1.0 - 8.0 * a)
}

/// Minimizer of [`scalar_objective`] over `8A < 1`:
/// `A* = (1 - 2φ - √((2φ+1)² + 8φ)) / 16`.
pub fn solve_scalar_a(phi: f64) -> f64 {
    let phi = phi.max(0.0);
    let root = ((2.0 * phi + 1.0).powi(2) + 8.0 * phi).sqrt();
    // √(...) - 1 rewritten to avoid cancellation at small φ
    -(2.0 * phi + (12.0 * phi + 4.0 * phi * phi) / (root + 1.0)) / 16.0
}

fn clamp_phi(phi: f64) -> Result<f64> {
    if phi < -PHI_CLAMP || !phi.is_finite() {
        return Err(Error::NegativePhi(phi));
    }
    Ok(phi.max(0.0))
}

/// Mean over pairs of the log second moment of GE features with parameter `a`.
pub fn ge_objective(a: f64, stats: &MomentStats) -> f64 {
    let d = stats.dim() as f64;
    d * ((1.0 - 4.0 * a).ln() - 0.5 * (1.0 - 8.0 * a).ln())
        + 2.0 * (1.0 - 4.0 * a) / (1.0 - 8.0 * a) * stats.mean_sum_sq()
        - stats.sx
        - stats.sy
}

/// Mean over pairs of the log second moment for arbitrary dense parameters,
/// computed from the moments alone.
pub fn de_objective(p: &DEParams, stats: &MomentStats) -> Result<f64> {
    let d = p.dim();
    if stats.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "parameters d={d}, statistics d={}",
            stats.dim()
        )));
    }
    let w = Vector::from_iterator(d, p.a_diag.iter().map(|a| 1.0 / (1.0 - 8.0 * a)));
    let weighted = |b: &Matrix| Matrix::from_fn(d, d, |r, c| w[r] * b[(r, c)]);
    let g1 = &p.c1 + p.b1.transpose() * weighted(&p.b1);
    let g2 = &p.c2 + p.b2.transpose() * weighted(&p.b2);
    let h = p.b1.transpose() * weighted(&p.b2);
    let log_det: f64 = p.a_diag.iter().map(|a| (1.0 - 8.0 * a).ln()).sum();
    Ok(4.0 * p.log_det_d - 0.5 * log_det
        + 2.0 * (g1 * &stats.m1).trace()
        + 2.0 * (g2 * &stats.m2).trace()
        + 4.0 * stats.mu4.dot(&(h * &stats.mu5)))
}

fn check_dim(stats: &MomentStats, d: usize) -> Result<()> {
    if stats.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "statistics have dimension {}, expected {d}",
            stats.dim()
        )));
    }
    Ok(())
}

/// GE parameters for `φ = mean ‖x+y‖² / d`.
pub fn fit_gerf(stats: &MomentStats, d: usize) -> Result<(GEParams, FitReport)> {
    check_dim(stats, d)?;
    let phi = clamp_phi(stats.mean_sum_sq() / d as f64)?;
    let a = solve_scalar_a(phi);
    let params = GEParams::new(a, d)?;
    let report = FitReport {
        phi,
        sigma_diag: None,
        lam3: None,
        objective_value: ge_objective(a, stats),
        family: FitFamily::Gerf,
    };
    Ok((params, report))
}

/// Mean over pairs of `‖Ψx + Ψ⁻¹y‖²`.
pub fn psiopt_value(stats: &MomentStats, psi: &[f64]) -> f64 {
    let nx = stats.n_x as f64;
    let ny = stats.n_y as f64;
    psi.iter()
        .enumerate()
        .map(|(l, p)| p * p * stats.diag_x[l] / nx + stats.diag_y[l] / (p * p * ny))
        .sum::<f64>()
        + 2.0 * stats.dim() as f64 * stats.mu3
}

/// `Ψ_l = (mean y_l² / mean x_l²)^{1/4}`, or 1 when either is zero.
pub fn optimal_psi(stats: &MomentStats) -> Vec<f64> {
    let nx = stats.n_x as f64;
    let ny = stats.n_y as f64;
    (0..stats.dim())
        .map(|l| {
            let (ex, ey) = (stats.diag_x[l] / nx, stats.diag_y[l] / ny);
            if ex > 0.0 && ey > 0.0 {
                (ey / ex).powf(0.25)
            } else {
                1.0
            }
        })
        .collect()
}

pub fn fit_saderf(stats: &MomentStats) -> Result<(SADEParams, FitReport)> {
    let psi = optimal_psi(stats);
    let scaled = stats.scaled(&psi);
    let (ge, mut report) = fit_gerf(&scaled, stats.dim())?;
    report.family = FitFamily::Saderf;
    Ok((SADEParams::new(Vector::from_vec(psi), ge)?, report))
}

fn check_nonsingular(m: &Matrix, which: &str) -> Result<SymEig> {
    let d = m.nrows() as f64;
    let eig = sym_eig_psd(m).map_err(|e| e.context(format!("{which} moment matrix")))?;
    let threshold = SINGULAR_REL * m.trace() / d;
    let min_eig = eig.lam[eig.lam.len() - 1];
    if !(min_eig > threshold) {
        return Err(Error::SingularMoments { min_eig, threshold });
    }
    Ok(eig)
}

fn ridge(m: &Matrix) -> Matrix {
    let d = m.nrows();
    m + Matrix::identity(d, d) * (RIDGE_EPS * m.trace() / d as f64)
}

/// Asymmetric dense fit. With `ridge`, `ε (trace/d) I` is added to both
/// moment matrices before decomposition.
pub fn fit_aderf(stats: &MomentStats, ridge_moments: bool) -> Result<(DEParams, FitReport)> {
    let d = stats.dim();
    let (m1, m2) = if ridge_moments {
        (ridge(&stats.m1), ridge(&stats.m2))
    } else {
        (stats.m1.clone(), stats.m2.clone())
    };
    let e1 = check_nonsingular(&m1, "first")?;
    let e2 = check_nonsingular(&m2, "second")?;
    let l1h = e1.lam.map(f64::sqrt);
    let l2h = e2.lam.map(f64::sqrt);
    let w = Matrix::from_diagonal(&l1h) * e1.q.transpose() * &e2.q * Matrix::from_diagonal(&l2h);
    let dec = svd(&w)?;
    let smax = dec.sigma[0];
    let smin = dec.sigma[d - 1];
    if !(smin >= SIGMA_REL * smax) || smax <= 0.0 {
        return Err(Error::DegenerateSigma { value: smin, max: smax });
    }
    let trace_sigma: f64 = dec.sigma.sum();
    let phi = clamp_phi(2.0 * (trace_sigma / d as f64 + stats.mu3))?;
    let a = solve_scalar_a(phi);
    let s = (1.0 - 4.0 * a).sqrt();
    let ut = dec.u.transpose();
    let q1t = e1.q.transpose();
    let b1 = Matrix::from_diagonal(&dec.sigma.map(|v| s * v.sqrt()))
        * &ut
        * Matrix::from_diagonal(&l1h.map(|v| 1.0 / v))
        * &q1t;
    let b2 = Matrix::from_diagonal(&dec.sigma.map(|v| s / v.sqrt()))
        * &ut
        * Matrix::from_diagonal(&l1h)
        * &q1t;
    let params = DEParams::from_parts(Vector::from_element(d, a), b1, b2)?;
    let df = d as f64;
    let objective_value = df
        * ((1.0 - 4.0 * a).ln() - 0.5 * (1.0 - 8.0 * a).ln()
            + 2.0 / (1.0 - 8.0 * a) * (trace_sigma / df + stats.mu3)
            + 2.0 * stats.mu3);
    let report = FitReport {
        phi,
        sigma_diag: Some(dec.sigma.iter().copied().collect()),
        lam3: None,
        objective_value,
        family: FitFamily::Aderf,
    };
    Ok((params, report))
}

/// Symmetric dense fit from `N = M¹ + μ⁴μ⁵ᵀ + μ⁵μ⁴ᵀ + M²`.
pub fn fit_sderf(stats: &MomentStats) -> Result<(DEParams, FitReport)> {
    let d = stats.dim();
    let outer = &stats.mu4 * stats.mu5.transpose();
    let n = &stats.m1 + &outer + outer.transpose() + &stats.m2;
    let eig = sym_eig_psd(&n).map_err(|e| e.context("N matrix"))?;
    let a = eig.lam.map(solve_scalar_a);
    let b = Matrix::from_diagonal(&a.map(|v| (1.0 - 4.0 * v).sqrt())) * eig.q.transpose();
    let params = DEParams::symmetric(a.clone(), b)?;
    let objective_value = (0..d)
        .map(|l| {
            let (al, ll) = (a[l], eig.lam[l]);
            (1.0 - 4.0 * al).ln() - 0.5 * (1.0 - 8.0 * al).ln() + (1.0 + 1.0 / (1.0 - 8.0 * al)) * ll
        })
        .sum::<f64>()
        - stats.sx
        - stats.sy;
    let report = FitReport {
        phi: eig.lam.iter().sum::<f64>() / d as f64,
        sigma_diag: None,
        lam3: Some(eig.lam.iter().copied().collect()),
        objective_value,
        family: FitFamily::Sderf,
    };
    Ok((params, report))
}

/// Invertible linear map `x → A x`, `y → A⁻ᵀ y` preserving the softmax kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ArfTransform {
    pub a_mat: Matrix,
}

impl ArfTransform {
    pub fn new(a_mat: Matrix) -> Result<Self> {
        if !a_mat.is_square() || a_mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularTransform);
        }
        let dec = svd(&a_mat)?;
        let n = dec.sigma.len();
        if !(dec.sigma[n - 1] > 1e-12 * dec.sigma[0]) {
            return Err(Error::SingularTransform);
        }
        Ok(Self { a_mat })
    }
}

/// First-order relaxation: with `Q_X = (M¹)^{½}`, `Q_Y = (M²)^{½}` and
/// `Q_X Q_Yᵀ = U D Vᵀ`, returns `U D^{½} Uᵀ Q_X⁻¹`.
pub fn fit_arf_first_order(m1: &Matrix, m2: &Matrix) -> Result<ArfTransform> {
    let e1 = check_nonsingular(m1, "first")?;
    let e2 = check_nonsingular(m2, "second")?;
    let qx = eig_apply(&e1, f64::sqrt);
    let qy = eig_apply(&e2, f64::sqrt);
    let qx_inv = eig_apply(&e1, |v| 1.0 / v.sqrt());
    let dec = svd(&(&qx * qy.transpose()))?;
    let half = &dec.u * Matrix::from_diagonal(&dec.sigma.map(f64::sqrt)) * dec.u.transpose();
    ArfTransform::new(half * qx_inv)
}

/// `‖A M¹ A - (A⁻²)ᵀ M²‖_F / (1 + ‖M²‖_F)`.
pub fn arf_residual(t: &ArfTransform, m1: &Matrix, m2: &Matrix) -> Result<f64> {
    let a = &t.a_mat;
    let inv = a.clone().try_inverse().ok_or(Error::SingularTransform)?;
    let inv2 = &inv * &inv;
    let r = a * m1 * a - inv2.transpose() * m2;
    Ok(r.norm() / (1.0 + m2.norm()))
}
