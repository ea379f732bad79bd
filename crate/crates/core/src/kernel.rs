//! The scaled softmax kernel `K(x, y) = exp(α‖x‖² + xᵀy + α‖y‖²)`, exact
//! kernel matrices and the moment statistics consumed by the solvers.

use serde::{Deserialize, Serialize};

use crate::error::{checked_exp, Error, Result};
use crate::linalg::{Matrix, Vector};

/// `alpha = 0` is the softmax kernel, `alpha = -1/2` the Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub alpha: f64,
}

impl KernelSpec {
    pub const SOFTMAX: KernelSpec = KernelSpec { alpha: 0.0 };
    pub const GAUSSIAN: KernelSpec = KernelSpec { alpha: -0.5 };

    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be finite, got {alpha}")));
        }
        Ok(Self { alpha })
    }
}

/// A set of points stored row-wise (`L x d`).
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Matrix,
}

impl PointSet {
    pub fn new(points: Matrix) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "point set must be non-empty, got {}x{}",
                points.nrows(),
                points.ncols()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("point set has non-finite entries".into()));
        }
        Ok(Self { points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let l = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(Matrix::from_fn(l, d, |i, j| rows[i][j]))
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.points
    }

    pub fn into_matrix(self) -> Matrix {
        self.points
    }

    pub fn row(&self, i: usize) -> Vector {
        self.points.row(i).transpose()
    }

    pub fn sq_norms(&self) -> Vec<f64> {
        self.points.row_iter().map(|r| r.norm_squared()).collect()
    }

    pub fn scaled(&self, s: f64) -> PointSet {
        PointSet {
            points: &self.points * s,
        }
    }

    /// Multiply coordinate `l` of every point by `scale[l]`.
    pub fn scale_columns(&self, scale: &[f64]) -> PointSet {
        let mut points = self.points.clone();
        for (c, s) in scale.iter().enumerate() {
            points.column_mut(c).scale_mut(*s);
        }
        PointSet { points }
    }

    pub fn select(&self, idx: &[usize]) -> PointSet {
        PointSet {
            points: self.points.select_rows(idx),
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn log_k_alpha(x: &[f64], y: &[f64], spec: KernelSpec) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel arguments of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(spec.alpha * dot(x, x) + dot(x, y) + spec.alpha * dot(y, y))
}

pub fn k_alpha(x: &[f64], y: &[f64], spec: KernelSpec) -> Result<f64> {
    checked_exp(log_k_alpha(x, y, spec)?)
}

/// Exponents `α‖xᵢ‖² + xᵢᵀyⱼ + α‖yⱼ‖²` for every pair.
pub fn log_kernel_matrix(xs: &PointSet, ys: &PointSet, spec: KernelSpec) -> Result<Matrix> {
    if xs.dim() != ys.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point sets of dimension {} and {}",
            xs.dim(),
            ys.dim()
        )));
    }
    let mut e = xs.matrix() * ys.matrix().transpose();
    if spec.alpha != 0.0 {
        let nx = xs.sq_norms();
        let ny = ys.sq_norms();
        for j in 0..ys.len() {
            for i in 0..xs.len() {
                e[(i, j)] += spec.alpha * (nx[i] + ny[j]);
            }
        }
    }
    Ok(e)
}

pub fn kernel_matrix(xs: &PointSet, ys: &PointSet, spec: KernelSpec) -> Result<Matrix> {
    let e = log_kernel_matrix(xs, ys, spec)?;
    if let Some(&bad) = e.iter().find(|v| **v > crate::error::MAX_EXPONENT) {
        return Err(Error::Overflow(bad));
    }
    Ok(e.map(f64::exp))
}

/// Data moments shared by every solver.
///
/// For point sets of sizes `Lx` and `Ly`: `m1 = Σ x xᵀ / Lx`,
/// `m2 = Σ y yᵀ / Ly`, `mu4`/`mu5` the means, `mu3 = mu4ᵀ mu5 / d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    pub m1: Matrix,
    pub m2: Matrix,
    pub mu3: f64,
    pub mu4: Vector,
    pub mu5: Vector,
    pub sx: f64,
    pub sy: f64,
    pub diag_x: Vector,
    pub diag_y: Vector,
    pub n_x: usize,
    pub n_y: usize,
}

fn second_moment(p: &PointSet) -> Matrix {
    let m = p.matrix();
    let mut s = m.transpose() * m / p.len() as f64;
    // exact symmetry regardless of gemm rounding
    let t = s.transpose();
    s += t;
    s * 0.5
}

fn column_sq_sums(p: &PointSet) -> Vector {
    Vector::from_iterator(
        p.dim(),
        p.matrix().column_iter().map(|c| c.norm_squared()),
    )
}

pub fn moment_stats(xs: &PointSet, ys: &PointSet) -> Result<MomentStats> {
    if xs.dim() != ys.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point sets of dimension {} and {}",
            xs.dim(),
            ys.dim()
        )));
    }
    let d = xs.dim();
    let mu4 = xs.matrix().row_mean().transpose();
    let mu5 = ys.matrix().row_mean().transpose();
    let sx = xs.sq_norms().iter().sum::<f64>() / xs.len() as f64;
    let sy = ys.sq_norms().iter().sum::<f64>() / ys.len() as f64;
    Ok(MomentStats {
        m1: second_moment(xs),
        m2: second_moment(ys),
        mu3: mu4.dot(&mu5) / d as f64,
        mu4,
        mu5,
        sx,
        sy,
        diag_x: column_sq_sums(xs),
        diag_y: column_sq_sums(ys),
        n_x: xs.len(),
        n_y: ys.len(),
    })
}

impl MomentStats {
    pub fn dim(&self) -> usize {
        self.mu4.len()
    }

    /// Mean of `‖x + y‖²` over all pairs.
    pub fn mean_sum_sq(&self) -> f64 {
        self.sx + self.sy + 2.0 * self.dim() as f64 * self.mu3
    }

    /// Statistics of the transformed sets `{Ψx}` and `{Ψ⁻¹y}`.
    pub fn scaled(&self, psi: &[f64]) -> MomentStats {
        let d = self.dim();
        let p = Vector::from_row_slice(psi);
        let pinv = p.map(|v| 1.0 / v);
        let m1 = Matrix::from_fn(d, d, |i, j| p[i] * self.m1[(i, j)] * p[j]);
        let m2 = Matrix::from_fn(d, d, |i, j| pinv[i] * self.m2[(i, j)] * pinv[j]);
        let mu4 = self.mu4.component_mul(&p);
        let mu5 = self.mu5.component_mul(&pinv);
        MomentStats {
            sx: m1.trace(),
            sy: m2.trace(),
            mu3: mu4.dot(&mu5) / d as f64,
            diag_x: self.diag_x.component_mul(&p.component_mul(&p)),
            diag_y: self.diag_y.component_mul(&pinv.component_mul(&pinv)),
            m1,
            m2,
            mu4,
            mu5,
            n_x: self.n_x,
            n_y: self.n_y,
        }
    }
}
