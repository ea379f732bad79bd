//! Random-feature families, feature matrices `P`, `S` and the low-rank
//! kernel estimate `P Sᵀ`.
//!
//! Positive families are evaluated in log space: the full exponent
//! (including `log D`) is assembled first and exponentiated once.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{checked_exp, Error, Result, MAX_EXPONENT};
use crate::kernel::PointSet;
use crate::linalg::{sample_gaussian, sample_orthogonal, DrawScheme, FeatureDraws, Matrix, Vector};
use crate::qmc::{sample_qmc, QmcCorrelation};
use crate::rng::Stream;

const CONSTRAINT_TOL: f64 = 1e-8;

/// Generalized exponential features `D exp(A‖ω‖² + B ωᵀx + C‖x‖²)` with
/// `B = √(1-4A)`, `C = -1/2`, `D = (1-4A)^{d/4}` (stored as a log).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GEParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub log_d_coeff: f64,
    pub d_dim: usize,
}

impl GEParams {
    pub fn new(a: f64, d_dim: usize) -> Result<Self> {
        if !(1.0 - 8.0 * a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidParams(format!("GE parameter A={a} violates 8A < 1")));
        }
        Ok(Self {
            a,
            b: (1.0 - 4.0 * a).sqrt(),
            c: -0.5,
            log_d_coeff: d_dim as f64 / 4.0 * (1.0 - 4.0 * a).ln(),
            d_dim,
        })
    }

    /// `A = 0`: positive random features.
    pub fn positive(d_dim: usize) -> Self {
        Self::new(0.0, d_dim).expect("A = 0 is admissible")
    }
}

/// Dense-exponential features
/// `D exp(ωᵀAω + ωᵀB⁽ᵏ⁾x + xᵀC⁽ᵏ⁾x)` with diagonal `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DEParams {
    pub a_diag: Vector,
    pub b1: Matrix,
    pub b2: Matrix,
    pub c1: Matrix,
    pub c2: Matrix,
    /// `¼ log det(I - 4A)`
    pub log_det_d: f64,
}

fn check_a(a_diag: &Vector) -> Result<()> {
    if let Some(bad) = a_diag.iter().find(|&&a| !(8.0 * a < 1.0) || !a.is_finite()) {
        return Err(Error::InvalidParams(format!("diagonal entry A={bad} violates 8A < 1")));
    }
    Ok(())
}

fn c_from_b(b: &Matrix, a_diag: &Vector) -> Matrix {
    let d = a_diag.len();
    let scaled = Matrix::from_fn(d, d, |r, c| b[(r, c)] / (1.0 - 4.0 * a_diag[r]));
    let mut c = b.transpose() * scaled * -0.5;
    let t = c.transpose();
    c += t;
    c * 0.5
}

impl DEParams {
    /// Completes `(A, B¹)` into valid parameters:
    /// `B² = (I - 4A) B¹⁻ᵀ` and `C⁽ᵏ⁾ = -½ B⁽ᵏ⁾ᵀ (I - 4A)⁻¹ B⁽ᵏ⁾`.
    pub fn from_a_b1(a_diag: Vector, b1: Matrix) -> Result<Self> {
        check_a(&a_diag)?;
        let d = a_diag.len();
        if b1.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "B1 is {:?}, expected {d}x{d}",
                b1.shape()
            )));
        }
        let inv_t = b1
            .clone()
            .try_inverse()
            .ok_or(Error::SingularTransform)?
            .transpose();
        let b2 = Matrix::from_fn(d, d, |r, c| (1.0 - 4.0 * a_diag[r]) * inv_t[(r, c)]);
        Self::from_parts(a_diag, b1, b2)
    }

    /// Symmetric parameters `B¹ = B² = b`, `C = -½ bᵀ(I-4A)⁻¹b`.
    pub fn symmetric(a_diag: Vector, b: Matrix) -> Result<Self> {
        Self::from_parts(a_diag, b.clone(), b)
    }

    /// Derive `C⁽ᵏ⁾` and `D` from `(A, B¹, B²)` and check the constraints.
    pub fn from_parts(a_diag: Vector, b1: Matrix, b2: Matrix) -> Result<Self> {
        check_a(&a_diag)?;
        let c1 = c_from_b(&b1, &a_diag);
        let c2 = c_from_b(&b2, &a_diag);
        let log_det_d = 0.25 * a_diag.iter().map(|a| (1.0 - 4.0 * a).ln()).sum::<f64>();
        let p = Self {
            a_diag,
            b1,
            b2,
            c1,
            c2,
            log_det_d,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_ge(ge: &GEParams) -> Self {
        let d = ge.d_dim;
        let b = Matrix::identity(d, d) * ge.b;
        let c = Matrix::identity(d, d) * ge.c;
        Self {
            a_diag: Vector::from_element(d, ge.a),
            b1: b.clone(),
            b2: b,
            c1: c.clone(),
            c2: c,
            log_det_d: ge.log_d_coeff,
        }
    }

    /// SADE parameters as a dense mechanism: `B¹ = bΨ`, `B² = bΨ⁻¹`.
    pub fn from_sade(sade: &SADEParams) -> Self {
        let ge = &sade.ge;
        let d = ge.d_dim;
        let psi = &sade.psi;
        let diag = |f: &dyn Fn(f64) -> f64| Matrix::from_diagonal(&psi.map(f));
        Self {
            a_diag: Vector::from_element(d, ge.a),
            b1: diag(&|p| ge.b * p),
            b2: diag(&|p| ge.b / p),
            c1: diag(&|p| ge.c * p * p),
            c2: diag(&|p| ge.c / (p * p)),
            log_det_d: ge.log_d_coeff,
        }
    }

    pub fn dim(&self) -> usize {
        self.a_diag.len()
    }

    /// Checks the validity conditions for unbiased features of the softmax kernel.
    pub fn validate(&self) -> Result<()> {
        check_a(&self.a_diag)?;
        let d = self.dim();
        for m in [&self.b1, &self.b2, &self.c1, &self.c2] {
            if m.shape() != (d, d) {
                return Err(Error::DimensionMismatch(format!(
                    "parameter matrix is {:?}, expected {d}x{d}",
                    m.shape()
                )));
            }
        }
        let w = Vector::from_iterator(d, self.a_diag.iter().map(|a| 1.0 / (1.0 - 4.0 * a)));
        let weighted = |b: &Matrix| Matrix::from_fn(d, d, |r, c| w[r] * b[(r, c)]);
        let cross = self.b1.transpose() * weighted(&self.b2) - Matrix::identity(d, d);
        let cross_err = cross.norm();
        if !(cross_err < CONSTRAINT_TOL) {
            return Err(Error::InvalidParams(format!(
                "B1ᵀ(I-4A)⁻¹B2 deviates from I by {cross_err:.3e}"
            )));
        }
        for (c, b) in [(&self.c1, &self.b1), (&self.c2, &self.b2)] {
            let err = (c + b.transpose() * weighted(b) * 0.5).norm();
            if !(err < CONSTRAINT_TOL) {
                return Err(Error::InvalidParams(format!(
                    "C deviates from -½BᵀΛB by {err:.3e}"
                )));
            }
        }
        let expected = 0.25 * self.a_diag.iter().map(|a| (1.0 - 4.0 * a).ln()).sum::<f64>();
        if !((self.log_det_d - expected).abs() <= 1e-10 * (1.0 + expected.abs())) {
            return Err(Error::InvalidParams(format!(
                "log D = {} but ¼ log det(I-4A) = {expected}",
                self.log_det_d
            )));
        }
        Ok(())
    }
}

/// GE features on rescaled inputs: `f¹(ω, x) = f_GE(ω, Ψx)`,
/// `f²(ω, y) = f_GE(ω, Ψ⁻¹y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SADEParams {
    pub psi: Vector,
    pub ge: GEParams,
}

impl SADEParams {
    pub fn new(psi: Vector, ge: GEParams) -> Result<Self> {
        if psi.len() != ge.d_dim {
            return Err(Error::DimensionMismatch(format!(
                "psi has length {}, GE dimension is {}",
                psi.len(),
                ge.d_dim
            )));
        }
        if psi.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParams("psi entries must be positive and finite".into()));
        }
        Ok(Self { psi, ge })
    }

    fn inverse_psi(&self) -> Vec<f64> {
        self.psi.iter().map(|p| 1.0 / p).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Trig,
    Pos,
    Ge(GEParams),
    Sade(SADEParams),
    De(DEParams),
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Trig => "trig",
            Family::Pos => "pos",
            Family::Ge(_) => "ge",
            Family::Sade(_) => "sade",
            Family::De(_) => "de",
        }
    }

    pub fn is_positive(&self) -> bool {
        !matches!(self, Family::Trig)
    }

    /// Parameter dimension, if the family is parameterized.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Family::Trig | Family::Pos => None,
            Family::Ge(p) => Some(p.d_dim),
            Family::Sade(p) => Some(p.ge.d_dim),
            Family::De(p) => Some(p.dim()),
        }
    }

    /// Equivalent dense parameters (every positive family embeds).
    pub fn as_de(&self, d: usize) -> Result<DEParams> {
        match self {
            Family::Trig => Err(Error::UnsupportedFamily("trig")),
            Family::Pos => Ok(DEParams::from_ge(&GEParams::positive(d))),
            Family::Ge(p) => Ok(DEParams::from_ge(p)),
            Family::Sade(p) => Ok(DEParams::from_sade(p)),
            Family::De(p) => Ok(p.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    Iid,
    Orthogonal,
    Qmc(QmcCorrelation),
}

impl Scheme {
    pub fn tag(&self) -> DrawScheme {
        match self {
            Scheme::Iid => DrawScheme::Iid,
            Scheme::Orthogonal => DrawScheme::Orthogonal,
            Scheme::Qmc(_) => DrawScheme::Qmc,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    pub family: Family,
    pub scheme: Scheme,
}

impl Mechanism {
    pub fn new(family: Family, scheme: Scheme) -> Result<Self> {
        if matches!(family, Family::Trig) && matches!(scheme, Scheme::Qmc(_)) {
            return Err(Error::InvalidArgument(
                "QMC draws are only supported for positive families".into(),
            ));
        }
        Ok(Self { family, scheme })
    }

    pub fn iid(family: Family) -> Self {
        Self {
            family,
            scheme: Scheme::Iid,
        }
    }

    /// Draw `m` frequencies of dimension `d` according to the scheme.
    /// QMC reuses the per-coordinate correlation with `m` draws.
    pub fn sample_draws(&self, m: usize, d: usize, rng: &mut Stream) -> Result<FeatureDraws> {
        if let Some(pd) = self.family.dim() {
            if pd != d {
                return Err(Error::DimensionMismatch(format!(
                    "mechanism dimension {pd}, data dimension {d}"
                )));
            }
        }
        let draws = match &self.scheme {
            Scheme::Iid => sample_gaussian(m, d, rng)?,
            Scheme::Orthogonal => sample_orthogonal(m, d, rng)?,
            Scheme::Qmc(corr) => {
                let corr = if corr.m == m {
                    corr.clone()
                } else {
                    QmcCorrelation::new(corr.psi_qmc.clone(), m)?
                };
                sample_qmc(&corr, d, rng)?
            }
        };
        Ok(if matches!(self.family, Family::Trig) {
            draws.with_phases(rng)
        } else {
            draws
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    First,
    Second,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exponent of a positive feature, `log f⁽ʷʰⁱᶜʰ⁾(ω, x)`.
pub fn log_feature(family: &Family, omega: &[f64], x: &[f64], which: Which) -> Result<f64> {
    if omega.len() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "ω has length {}, x has length {}",
            omega.len(),
            x.len()
        )));
    }
    if let Some(pd) = family.dim() {
        if pd != x.len() {
            return Err(Error::DimensionMismatch(format!(
                "parameters have dimension {pd}, x has length {}",
                x.len()
            )));
        }
    }
    Ok(match family {
        Family::Trig => return Err(Error::TrigUnsupported),
        Family::Pos => dot(omega, x) - 0.5 * dot(x, x),
        Family::Ge(p) => ge_exponent(p, omega, x),
        Family::Sade(p) => {
            let t: Vec<f64> = match which {
                Which::First => x.iter().zip(p.psi.iter()).map(|(v, s)| v * s).collect(),
                Which::Second => x.iter().zip(p.psi.iter()).map(|(v, s)| v / s).collect(),
            };
            ge_exponent(&p.ge, omega, &t)
        }
        Family::De(p) => {
            let (b, c) = match which {
                Which::First => (&p.b1, &p.c1),
                Which::Second => (&p.b2, &p.c2),
            };
            let xv = Vector::from_row_slice(x);
            let w = Vector::from_row_slice(omega);
            let quad_a: f64 = p.a_diag.iter().zip(omega).map(|(a, o)| a * o * o).sum();
            quad_a + w.dot(&(b * &xv)) + xv.dot(&(c * &xv)) + p.log_det_d
        }
    })
}

fn ge_exponent(p: &GEParams, omega: &[f64], x: &[f64]) -> f64 {
    p.log_d_coeff + p.a * dot(omega, omega) + p.b * dot(omega, x) + p.c * dot(x, x)
}

/// `f⁽ʷʰⁱᶜʰ⁾(ω, x)`; trigonometric features take the phase `theta`.
pub fn eval_feature(
    mech: &Mechanism,
    omega: &[f64],
    theta: Option<f64>,
    x: &[f64],
    which: Which,
) -> Result<f64> {
    match mech.family {
        Family::Trig => {
            let theta = theta.ok_or(Error::MissingPhase)?;
            if omega.len() != x.len() {
                return Err(Error::DimensionMismatch("ω and x lengths differ".into()));
            }
            let proj = dot(omega, x);
            // same sign on both sides: cos(-ωᵀy+θ) would estimate exp(-xᵀy)
            Ok(SQRT_2 * checked_exp(0.5 * dot(x, x))? * (proj + theta).cos())
        }
        _ => checked_exp(log_feature(&mech.family, omega, x, which)?),
    }
}

/// Feature matrices with `P Sᵀ` estimating the kernel matrix.
#[derive(Debug, Clone)]
pub struct FeaturePair {
    pub p: Matrix,
    pub s: Matrix,
}

fn check_draws(mech: &Mechanism, draws: &FeatureDraws, points: &PointSet) -> Result<()> {
    if draws.scheme != mech.scheme.tag() {
        return Err(Error::InvalidArgument(format!(
            "draws use {:?} but the mechanism expects {:?}",
            draws.scheme,
            mech.scheme.tag()
        )));
    }
    if draws.dim() != points.dim() {
        return Err(Error::DimensionMismatch(format!(
            "draws have dimension {}, points {}",
            draws.dim(),
            points.dim()
        )));
    }
    if let Some(pd) = mech.family.dim() {
        if pd != points.dim() {
            return Err(Error::DimensionMismatch(format!(
                "mechanism dimension {pd}, points {}",
                points.dim()
            )));
        }
    }
    Ok(())
}

/// `log f⁽ʷʰⁱᶜʰ⁾(ω⁽ᵐ⁾, xᵢ)` for all points and draws (`L x M`), positive
/// families only. Dense parameters are applied to the draws once
/// (`Ω B`, `O(M d²)`) and to the points once (`xᵀCx`, `O(L d²)`), so the
/// `L x M` part costs `O(L M d)`.
pub fn log_feature_matrix(
    family: &Family,
    draws: &FeatureDraws,
    points: &PointSet,
    which: Which,
) -> Result<Matrix> {
    let omegas = &draws.omegas;
    let x = points.matrix();
    let sq_omega: Vec<f64> = omegas.row_iter().map(|r| r.norm_squared()).collect();
    let (proj, row_term, col_term): (Matrix, Vec<f64>, Vec<f64>) = match family {
        Family::Trig => return Err(Error::TrigUnsupported),
        Family::Pos => (
            x * omegas.transpose(),
            points.sq_norms().iter().map(|v| -0.5 * v).collect(),
            vec![0.0; draws.count()],
        ),
        Family::Ge(p) => ge_terms(p, omegas, points, &sq_omega),
        Family::Sade(p) => {
            let scaled = match which {
                Which::First => points.scale_columns(p.psi.as_slice()),
                Which::Second => points.scale_columns(&p.inverse_psi()),
            };
            ge_terms(&p.ge, omegas, &scaled, &sq_omega)
        }
        Family::De(p) => {
            let (b, c) = match which {
                Which::First => (&p.b1, &p.c1),
                Which::Second => (&p.b2, &p.c2),
            };
            let projected = omegas * b;
            let xc = x * c;
            let quad: Vec<f64> = (0..x.nrows()).map(|i| x.row(i).dot(&xc.row(i))).collect();
            let col: Vec<f64> = omegas
                .row_iter()
                .map(|w| {
                    w.iter().zip(p.a_diag.iter()).map(|(o, a)| a * o * o).sum::<f64>() + p.log_det_d
                })
                .collect();
            (x * projected.transpose(), quad, col)
        }
    };
    let mut out = proj;
    for (j, cj) in col_term.iter().enumerate() {
        for (i, ri) in row_term.iter().enumerate() {
            out[(i, j)] += ri + cj;
        }
    }
    Ok(out)
}

fn ge_terms(
    p: &GEParams,
    omegas: &Matrix,
    points: &PointSet,
    sq_omega: &[f64],
) -> (Matrix, Vec<f64>, Vec<f64>) {
    (
        points.matrix() * omegas.transpose() * p.b,
        points.sq_norms().iter().map(|v| p.c * v).collect(),
        sq_omega.iter().map(|w| p.log_d_coeff + p.a * w).collect(),
    )
}

fn exp_scaled(log: Matrix, scale: f64) -> Result<Matrix> {
    if let Some(&bad) = log.iter().find(|v| **v > MAX_EXPONENT || v.is_nan()) {
        return Err(Error::Overflow(bad));
    }
    Ok(log.map(|v| scale * v.exp()))
}

fn trig_matrix(draws: &FeatureDraws, points: &PointSet, scale: f64, alpha: f64) -> Result<Matrix> {
    let phases = draws.phases.as_ref().ok_or(Error::MissingPhase)?;
    let proj = points.matrix() * draws.omegas.transpose();
    let norms = points.sq_norms();
    let mut out = proj;
    for (j, theta) in phases.iter().enumerate() {
        for (i, n) in norms.iter().enumerate() {
            let arg = out[(i, j)] + theta;
            let amp = checked_exp((0.5 + alpha) * n).map_err(|e| e.context(format!("point {i}")))?;
            out[(i, j)] = scale * SQRT_2 * amp * arg.cos();
        }
    }
    Ok(out)
}

/// One side of the estimator: `M^{-1/2} f⁽ʷʰⁱᶜʰ⁾(ω⁽ᵐ⁾, xᵢ)`.
pub fn feature_matrix(
    mech: &Mechanism,
    draws: &FeatureDraws,
    points: &PointSet,
    which: Which,
) -> Result<Matrix> {
    feature_matrix_alpha(mech, draws, points, which, 0.0)
}

/// Features for `K^(α)`: `exp(α‖xᵢ‖²)` times the softmax features, with the
/// factor folded into the exponent before exponentiating.
pub fn feature_matrix_alpha(
    mech: &Mechanism,
    draws: &FeatureDraws,
    points: &PointSet,
    which: Which,
    alpha: f64,
) -> Result<Matrix> {
    check_draws(mech, draws, points)?;
    let scale = 1.0 / (draws.count() as f64).sqrt();
    match mech.family {
        Family::Trig => trig_matrix(draws, points, scale, alpha),
        _ => {
            let mut log = log_feature_matrix(&mech.family, draws, points, which)?;
            if alpha != 0.0 {
                for (i, n) in points.sq_norms().iter().enumerate() {
                    log.row_mut(i).add_scalar_mut(alpha * n);
                }
            }
            exp_scaled(log.clone(), scale).map_err(|e| {
                let (i, m) = first_overflow(&log);
                e.context(format!("feature (point {i}, draw {m})"))
            })
        }
    }
}

fn first_overflow(log: &Matrix) -> (usize, usize) {
    for i in 0..log.nrows() {
        for m in 0..log.ncols() {
            if log[(i, m)] > MAX_EXPONENT || log[(i, m)].is_nan() {
                return (i, m);
            }
        }
    }
    (0, 0)
}

pub fn build_features(
    mech: &Mechanism,
    draws: &FeatureDraws,
    xs: &PointSet,
    ys: &PointSet,
) -> Result<FeaturePair> {
    Ok(FeaturePair {
        p: feature_matrix(mech, draws, xs, Which::First)?,
        s: feature_matrix(mech, draws, ys, Which::Second)?,
    })
}

/// Rescale a softmax-kernel estimate to `K^(α)`: row `i` of `P` is
/// multiplied by `exp(α‖xᵢ‖²)`, row `j` of `S` by `exp(α‖yⱼ‖²)`.
pub fn rescale_alpha(fp: &mut FeaturePair, xs: &PointSet, ys: &PointSet, alpha: f64) -> Result<()> {
    for (mat, pts) in [(&mut fp.p, xs), (&mut fp.s, ys)] {
        for (i, n) in pts.sq_norms().iter().enumerate() {
            let f = checked_exp(alpha * n)?;
            mat.row_mut(i).scale_mut(f);
        }
    }
    Ok(())
}

pub fn approx_kernel(fp: &FeaturePair) -> Result<Matrix> {
    if fp.p.ncols() != fp.s.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "P has {} columns, S has {}",
            fp.p.ncols(),
            fp.s.ncols()
        )));
    }
    Ok(&fp.p * fp.s.transpose())
}

/// `P (Sᵀ C)` without forming the `L x L` estimate.
pub fn approx_apply(fp: &FeaturePair, c: &Matrix) -> Result<Matrix> {
    if c.nrows() != fp.s.nrows() || fp.p.ncols() != fp.s.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "S is {:?}, C is {:?}",
            fp.s.shape(),
            c.shape()
        )));
    }
    Ok(&fp.p * (fp.s.transpose() * c))
}
