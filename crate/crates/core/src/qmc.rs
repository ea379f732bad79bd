//! Correlated Gaussian draws: for every coordinate `l` the `M` values
//! `ω⁽¹⁾_l, …, ω⁽ᴹ⁾_l` have covariance `Ψ_l 11ᵀ + (1 - Ψ_l) I`, coordinates
//! are independent, and each draw stays marginally `N(0, I)`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{checked_exp, Error, Result};
use crate::features::DEParams;
use crate::linalg::{DrawScheme, FeatureDraws, Matrix, Vector};
use crate::rng::Stream;

const BOUND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QmcCorrelation {
    pub psi_qmc: Vec<f64>,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QmcValidation {
    pub valid: bool,
    /// `(1 + (m-1)Ψ_l, 1 - Ψ_l)` per coordinate.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Coordinates outside `[-1/(m-1), 1]`.
    pub violations: Vec<usize>,
}

pub fn validate_qmc(psi: &[f64], m: usize) -> QmcValidation {
    let lower = if m >= 2 { -1.0 / (m as f64 - 1.0) } else { 0.0 };
    let eigenvalues: Vec<(f64, f64)> = psi
        .iter()
        .map(|p| (1.0 + (m as f64 - 1.0) * p, 1.0 - p))
        .collect();
    let violations: Vec<usize> = psi
        .iter()
        .enumerate()
        .filter(|(_, p)| !(p.is_finite() && **p >= lower - BOUND_TOL && **p <= 1.0 + BOUND_TOL))
        .map(|(l, _)| l)
        .collect();
    QmcValidation {
        valid: m >= 2 && violations.is_empty(),
        eigenvalues,
        violations,
    }
}

impl QmcCorrelation {
    pub fn new(psi_qmc: Vec<f64>, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidCorrelation(format!("need at least 2 draws, got {m}")));
        }
        let v = validate_qmc(&psi_qmc, m);
        if !v.valid {
            let l = v.violations[0];
            return Err(Error::InvalidCorrelation(format!(
                "coordinate {l}: Ψ={} outside [{}, 1] for m={m}",
                psi_qmc[l],
                -1.0 / (m as f64 - 1.0)
            )));
        }
        Ok(Self { psi_qmc, m })
    }

    /// Every coordinate at the most negative admissible correlation `-1/(m-1)`.
    pub fn antithetic(d: usize, m: usize) -> Result<Self> {
        Self::new(vec![-1.0 / (m.max(2) as f64 - 1.0); d], m)
    }

    pub fn dim(&self) -> usize {
        self.psi_qmc.len()
    }
}

/// `ω = √(1-Ψ)(I - P)ε + √(1+(m-1)Ψ) P ε` per coordinate with `P = 11ᵀ/m`.
pub fn sample_qmc(corr: &QmcCorrelation, d: usize, rng: &mut Stream) -> Result<FeatureDraws> {
    if corr.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "correlation has {} coordinates, d = {d}",
            corr.dim()
        )));
    }
    let v = validate_qmc(&corr.psi_qmc, corr.m);
    if !v.valid {
        return Err(Error::InvalidCorrelation(format!(
            "coordinates {:?} out of range",
            v.violations
        )));
    }
    let m = corr.m;
    let mut omegas = Matrix::zeros(m, d);
    let mut eps = vec![0.0; m];
    for (l, &psi) in corr.psi_qmc.iter().enumerate() {
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        let mean = eps.iter().sum::<f64>() / m as f64;
        let perp = (1.0 - psi).max(0.0).sqrt();
        let par = (1.0 + (m as f64 - 1.0) * psi).max(0.0).sqrt();
        for (r, e) in eps.iter().enumerate() {
            omegas[(r, l)] = perp * (e - mean) + par * mean;
        }
    }
    Ok(FeatureDraws {
        omegas,
        phases: None,
        scheme: DrawScheme::Qmc,
    })
}

/// `E[Z(ω¹) Z(ω²)]` for two draws with per-coordinate correlation `Ψ`,
/// where `Z(ω) = f¹(ω, x) f²(ω, y)`. With `z = B¹x + B²y`:
///
/// `D⁴ exp(2xᵀC¹x + 2yᵀC²y) ∏_l exp(z_l²(1+Ψ_l)/(1-4A_l(1+Ψ_l))) ((1-4A_l)² - 16A_l²Ψ_l²)^{-1/2}`
pub fn log_qmc_cross_moment(p: &DEParams, psi: &[f64], x: &[f64], y: &[f64]) -> Result<f64> {
    let d = p.dim();
    if psi.len() != d || x.len() != d || y.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "params d={d}, Ψ {}, x {}, y {}",
            psi.len(),
            x.len(),
            y.len()
        )));
    }
    if psi.iter().any(|s| !(s.abs() <= 1.0)) {
        return Err(Error::InvalidCorrelation("cross moment needs |Ψ| ≤ 1".into()));
    }
    let xv = Vector::from_row_slice(x);
    let yv = Vector::from_row_slice(y);
    let z = &p.b1 * &xv + &p.b2 * &yv;
    let mut log = 4.0 * p.log_det_d + 2.0 * xv.dot(&(&p.c1 * &xv)) + 2.0 * yv.dot(&(&p.c2 * &yv));
    for l in 0..d {
        let a = p.a_diag[l];
        let s = psi[l];
        let denom = 1.0 - 4.0 * a * (1.0 + s);
        let det = (1.0 - 4.0 * a).powi(2) - 16.0 * a * a * s * s;
        if !(denom > 0.0 && det > 0.0) {
            return Err(Error::InvalidParams(format!(
                "cross moment diverges at coordinate {l} (A={a}, Ψ={s})"
            )));
        }
        log += z[l] * z[l] * (1.0 + s) / denom - 0.5 * det.ln();
    }
    Ok(log)
}

pub fn qmc_cross_moment(p: &DEParams, corr: &QmcCorrelation, x: &[f64], y: &[f64]) -> Result<f64> {
    checked_exp(log_qmc_cross_moment(p, &corr.psi_qmc, x, y)?)
}
