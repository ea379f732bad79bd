//! Exact bidirectional softmax attention and its random-feature estimate.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{log_feature_matrix, Family, Mechanism, Which};
use crate::kernel::PointSet;
use crate::linalg::{FeatureDraws, Matrix};
use crate::rng::Stream;

const ROW_BLOCK: usize = 128;

#[derive(Debug, Clone)]
pub struct AttentionBatch {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
}

impl AttentionBatch {
    pub fn new(q: Matrix, k: Matrix, v: Matrix) -> Result<Self> {
        if q.shape() != k.shape() || q.nrows() != v.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "q {:?}, k {:?}, v {:?}",
                q.shape(),
                k.shape(),
                v.shape()
            )));
        }
        if q.nrows() == 0 || q.ncols() == 0 {
            return Err(Error::InvalidArgument("empty attention batch".into()));
        }
        if [&q, &k, &v].iter().any(|m| m.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidArgument("attention inputs must be finite".into()));
        }
        Ok(Self { q, k, v })
    }

    pub fn len(&self) -> usize {
        self.q.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.q.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.q.ncols()
    }

    /// `d^{-1/4} Q` and `d^{-1/4} K` as point sets.
    pub fn scaled_sets(&self) -> Result<(PointSet, PointSet)> {
        let s = (self.dim() as f64).powf(-0.25);
        Ok((PointSet::new(&self.q * s)?, PointSet::new(&self.k * s)?))
    }
}

/// `diag(K1)⁻¹ K V` with `K_ij = exp(xᵢᵀyⱼ)`, computed in row blocks with
/// the row maximum subtracted from every exponent.
pub fn exact_attention(b: &AttentionBatch) -> Result<Matrix> {
    let (xs, ys) = b.scaled_sets()?;
    let l = b.len();
    let y = ys.matrix();
    let blocks: Vec<Matrix> = (0..l.div_ceil(ROW_BLOCK))
        .into_par_iter()
        .map(|blk| {
            let start = blk * ROW_BLOCK;
            let rows = ROW_BLOCK.min(l - start);
            // keys x queries, so each query's weights are one contiguous column
            let mut w = y * xs.matrix().rows(start, rows).transpose();
            for mut c in w.column_iter_mut() {
                let mx = c.max();
                let mut sum = 0.0;
                for e in c.iter_mut() {
                    *e = (*e - mx).exp();
                    sum += *e;
                }
                c /= sum;
            }
            w.tr_mul(&b.v)
        })
        .collect();
    let mut out = Matrix::zeros(l, b.v.ncols());
    for (blk, m) in blocks.into_iter().enumerate() {
        out.rows_mut(blk * ROW_BLOCK, m.nrows()).copy_from(&m);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfDiagnostics {
    /// Smallest normalizer after the per-query and global key shifts.
    pub min_denominator: f64,
    /// Range of query-side feature exponents before shifting.
    pub query_log_range: (f64, f64),
    /// Range of key-side feature exponents before shifting.
    pub key_log_range: (f64, f64),
}

fn log_range(m: &Matrix) -> (f64, f64) {
    (m.min(), m.max())
}

/// Shifted feature matrices: query row `i` is divided by its largest
/// feature, keys by the global largest one. Both cancel in the
/// normalized output.
fn shifted_features(
    mech: &Mechanism,
    draws: &FeatureDraws,
    xs: &PointSet,
    ys: &PointSet,
) -> Result<(Matrix, Matrix, RfDiagnostics)> {
    if !mech.family.is_positive() {
        return Err(Error::TrigUnsupported);
    }
    if draws.scheme != mech.scheme.tag() || draws.dim() != xs.dim() {
        return Err(Error::InvalidArgument(
            "draws do not match the mechanism or the data dimension".into(),
        ));
    }
    let lp = log_feature_matrix(&mech.family, draws, xs, Which::First)?;
    let ls = log_feature_matrix(&mech.family, draws, ys, Which::Second)?;
    let diag = RfDiagnostics {
        min_denominator: 0.0,
        query_log_range: log_range(&lp),
        key_log_range: log_range(&ls),
    };
    if lp.iter().chain(ls.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Overflow(f64::INFINITY));
    }
    let mut p = lp;
    for mut r in p.row_iter_mut() {
        let mx = r.max();
        r.apply(|e| *e = (*e - mx).exp());
    }
    let kmax = ls.max();
    let s = ls.map(|e| (e - kmax).exp());
    Ok((p, s, diag))
}

/// Random-feature attention for given draws: `P(SᵀV) / P(Sᵀ1)`, never
/// forming an `L x L` matrix.
pub fn rf_attention_with_draws(
    b: &AttentionBatch,
    mech: &Mechanism,
    draws: &FeatureDraws,
) -> Result<(Matrix, RfDiagnostics)> {
    let (xs, ys) = b.scaled_sets()?;
    let (p, s, mut diag) = shifted_features(mech, draws, &xs, &ys)?;
    let st = s.transpose();
    let num = &p * (&st * &b.v);
    let den = &p * st.column_sum();
    let mut out = num;
    let mut min_den = f64::INFINITY;
    for (i, d) in den.iter().enumerate() {
        if !(*d > 0.0) || !d.is_finite() {
            return Err(Error::DegenerateDenominator(i));
        }
        min_den = min_den.min(*d);
        out.row_mut(i).unscale_mut(*d);
    }
    diag.min_denominator = min_den;
    Ok((out, diag))
}

pub fn rf_attention(
    b: &AttentionBatch,
    mech: &Mechanism,
    m: usize,
    rng: &mut Stream,
) -> Result<(Matrix, RfDiagnostics)> {
    if matches!(mech.family, Family::Trig) {
        return Err(Error::TrigUnsupported);
    }
    let draws = mech.sample_draws(m, b.dim(), rng)?;
    rf_attention_with_draws(b, mech, &draws)
}

/// The `L x L` attention matrix implied by the estimator. Quadratic in
/// `L`; meant for inspection on small inputs.
pub fn implied_attention(b: &AttentionBatch, mech: &Mechanism, draws: &FeatureDraws) -> Result<Matrix> {
    let (xs, ys) = b.scaled_sets()?;
    let (p, s, _) = shifted_features(mech, draws, &xs, &ys)?;
    let mut k = p * s.transpose();
    for (i, mut r) in k.row_iter_mut().enumerate() {
        let sum = r.sum();
        if !(sum > 0.0) {
            return Err(Error::DegenerateDenominator(i));
        }
        r /= sum;
    }
    Ok(k)
}

/// `‖approx - exact‖_F / (1e-30 + ‖exact‖_F)`.
pub fn attention_error(y_exact: &Matrix, y_approx: &Matrix) -> Result<f64> {
    if y_exact.shape() != y_approx.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            y_exact.shape(),
            y_approx.shape()
        )));
    }
    Ok((y_approx - y_exact).norm() / (1e-30 + y_exact.norm()))
}
