//! Dense small-matrix primitives: symmetric eigendecomposition, SVD,
//! Gaussian and orthogonal draws, and the trace-maximizing pairing.
//!
//! Decompositions are backed by `nalgebra`; this module pins the ordering
//! conventions (non-ascending, ties broken by original index) that the
//! closed-form solvers rely on.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

const EIG_EPS: f64 = 1e-15;
const MAX_ITER: usize = 10_000;
const ASYMMETRY_TOL: f64 = 1e-8;

/// Eigendecomposition `q * diag(lam) * q^T` with `lam` sorted non-ascending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub q: Matrix,
    pub lam: Vector,
}

/// `u * diag(sigma) * v^T` with `sigma` sorted non-ascending.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vector,
    pub v: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawScheme {
    Iid,
    Orthogonal,
    Qmc,
}

/// `M x d` matrix of frequency draws, one row per feature.
#[derive(Debug, Clone)]
pub struct FeatureDraws {
    pub omegas: Matrix,
    /// Uniform phases in `[0, 2π)`, only for trigonometric features.
    pub phases: Option<Vec<f64>>,
    pub scheme: DrawScheme,
}

impl FeatureDraws {
    pub fn count(&self) -> usize {
        self.omegas.nrows()
    }

    pub fn dim(&self) -> usize {
        self.omegas.ncols()
    }

    /// Attach uniform phases (one per draw).
    pub fn with_phases(mut self, rng: &mut Stream) -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        self.phases = Some((0..self.count()).map(|_| rng.random::<f64>() * two_pi).collect());
        self
    }
}

fn order_non_ascending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    // sort_by is stable, so ties keep index order
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn sym_eig(s: &Matrix) -> Result<SymEig> {
    let d = s.nrows();
    if s.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "sym_eig expects a square matrix, got {}x{}",
            d,
            s.ncols()
        )));
    }
    let scale = frobenius(s);
    let asym = frobenius(&(s - s.transpose()));
    if scale > 0.0 && asym / scale > ASYMMETRY_TOL {
        return Err(Error::AsymmetricInput(asym / scale));
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, EIG_EPS, MAX_ITER)
        .ok_or(Error::NoConvergence("symmetric eigendecomposition"))?;
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = order_non_ascending(&values);
    let lam = Vector::from_iterator(d, order.iter().map(|&i| values[i]));
    let q = Matrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SymEig { q, lam })
}

/// Eigendecomposition of a matrix expected to be PSD. Eigenvalues in
/// `[-1e-10 * trace, 0)` are set to zero; anything lower is `NonPsd`.
pub fn sym_eig_psd(s: &Matrix) -> Result<SymEig> {
    let mut eig = sym_eig(s)?;
    let tol = 1e-10 * s.trace().abs().max(f64::MIN_POSITIVE);
    for v in eig.lam.iter_mut() {
        if *v < 0.0 {
            if *v >= -tol {
                *v = 0.0;
            } else {
                return Err(Error::NonPsd(*v));
            }
        }
    }
    Ok(eig)
}

pub fn svd(a: &Matrix) -> Result<SvdResult> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("svd input has non-finite entries".into()));
    }
    let (r, c) = a.shape();
    if r != c {
        return Err(Error::DimensionMismatch(format!(
            "svd expects a square matrix, got {r}x{c}"
        )));
    }
    let dec = SVD::try_new(a.clone(), true, true, EIG_EPS, MAX_ITER)
        .ok_or(Error::NoConvergence("singular value decomposition"))?;
    let u = dec.u.ok_or(Error::NoConvergence("svd left vectors"))?;
    let v_t = dec.v_t.ok_or(Error::NoConvergence("svd right vectors"))?;
    let values: Vec<f64> = dec.singular_values.iter().copied().collect();
    let order = order_non_ascending(&values);
    let sigma = Vector::from_iterator(r, order.iter().map(|&i| values[i]));
    let u = Matrix::from_fn(r, r, |i, j| u[(i, order[j])]);
    let v = Matrix::from_fn(r, r, |i, j| v_t[(order[j], i)]);
    Ok(SvdResult { u, sigma, v })
}

/// `q * diag(f(lam)) * q^T`.
pub fn eig_apply(eig: &SymEig, f: impl Fn(f64) -> f64) -> Matrix {
    let d = eig.lam.len();
    let mut scaled = eig.q.clone();
    for c in 0..d {
        let s = f(eig.lam[c]);
        scaled.column_mut(c).scale_mut(s);
    }
    scaled * eig.q.transpose()
}

fn check_counts(m: usize, d: usize) -> Result<()> {
    if m == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "draw count and dimension must be positive (m={m}, d={d})"
        )));
    }
    Ok(())
}

pub fn sample_gaussian(m: usize, d: usize, rng: &mut Stream) -> Result<FeatureDraws> {
    check_counts(m, d)?;
    // filled row by row so a prefix of draws does not depend on m
    let mut omegas = Matrix::zeros(m, d);
    for r in 0..m {
        for c in 0..d {
            omegas[(r, c)] = rng.sample(StandardNormal);
        }
    }
    Ok(FeatureDraws {
        omegas,
        phases: None,
        scheme: DrawScheme::Iid,
    })
}

/// Block-orthogonal Gaussian draws.
///
/// Rows come in blocks of `d`; directions inside a block are orthonormal
/// (Gram-Schmidt of a Gaussian block, hence Haar distributed) and each row
/// is rescaled by an independent chi(d) norm, so every row is marginally
/// `N(0, I_d)`.
pub fn sample_orthogonal(m: usize, d: usize, rng: &mut Stream) -> Result<FeatureDraws> {
    check_counts(m, d)?;
    let mut omegas = Matrix::zeros(m, d);
    let mut start = 0;
    while start < m {
        let rows = d.min(m - start);
        let mut block: Vec<Vec<f64>> = Vec::with_capacity(rows);
        while block.len() < rows {
            let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            for prev in &block {
                let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(prev).for_each(|(a, b)| *a -= dot * b);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            // a near-dependent draw has probability ~0; redraw it
            if norm < 1e-8 {
                continue;
            }
            v.iter_mut().for_each(|a| *a /= norm);
            block.push(v);
        }
        for (k, dir) in block.iter().enumerate() {
            let chi = (0..d)
                .map(|_| {
                    let g: f64 = rng.sample(StandardNormal);
                    g * g
                })
                .sum::<f64>()
                .sqrt();
            for c in 0..d {
                omegas[(start + k, c)] = chi * dir[c];
            }
        }
        start += rows;
    }
    Ok(FeatureDraws {
        omegas,
        phases: None,
        scheme: DrawScheme::Orthogonal,
    })
}

/// `sum_l sorted_desc(e)_l * lam_l`, the supremum over orthogonal `Q` of
/// `Trace(diag(e) Q N Q^T)` for any symmetric `N` with spectrum `lam`.
pub fn trace_max_pairing(e_diag: &[f64], lam: &[f64]) -> Result<f64> {
    if e_diag.len() != lam.len() {
        return Err(Error::DimensionMismatch(format!(
            "trace pairing lengths {} and {}",
            e_diag.len(),
            lam.len()
        )));
    }
    if lam.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument("lam must be sorted non-ascending".into()));
    }
    let mut e = e_diag.to_vec();
    e.sort_by(|a, b| b.total_cmp(a));
    Ok(e.iter().zip(lam).map(|(a, b)| a * b).sum())
}
