// Independent oracles shared by the integration tests. Nothing here calls
// into the library's own moment or feature code.
#![allow(dead_code)]

use derf::features::DEParams;
use derf::linalg::{Matrix, Vector};
use derf::rng::Stream;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Softmax kernel `exp(xᵀy)`.
pub fn softmax_kernel(x: &[f64], y: &[f64]) -> f64 {
    dot(x, y).exp()
}

pub fn gaussian_vec(d: usize, rng: &mut Stream) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Uniform direction with norm uniform on `[0, r]`.
pub fn ball_point(d: usize, r: f64, rng: &mut Stream) -> Vec<f64> {
    let g = gaussian_vec(d, rng);
    let n = dot(&g, &g).sqrt();
    let u: f64 = rng.random::<f64>() * r;
    g.iter().map(|v| v * u / n).collect()
}

pub fn ball_set(l: usize, d: usize, r: f64, rng: &mut Stream) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..l).map(|_| ball_point(d, r, rng)).collect();
    Matrix::from_fn(l, d, |i, j| rows[i][j])
}

/// `log f⁽ᵏ⁾(ω, x) = log D + ωᵀAω + ωᵀBx + xᵀCx` straight from the fields.
pub fn de_log_feature(p: &DEParams, omega: &[f64], x: &[f64], first: bool) -> f64 {
    let (b, c) = if first { (&p.b1, &p.c1) } else { (&p.b2, &p.c2) };
    let d = omega.len();
    let w = Vector::from_row_slice(omega);
    let xv = Vector::from_row_slice(x);
    let quad: f64 = (0..d).map(|l| p.a_diag[l] * omega[l] * omega[l]).sum();
    p.log_det_d + quad + w.dot(&(b * &xv)) + xv.dot(&(c * &xv))
}

/// `Z(ω) = f¹(ω, x) f²(ω, y)`.
pub fn de_product(p: &DEParams, omega: &[f64], x: &[f64], y: &[f64]) -> f64 {
    (de_log_feature(p, omega, x, true) + de_log_feature(p, omega, y, false)).exp()
}

/// GE features taken directly from their scalar definition.
pub fn ge_product(a: f64, omega: &[f64], x: &[f64], y: &[f64]) -> f64 {
    let d = omega.len() as f64;
    let b = (1.0 - 4.0 * a).sqrt();
    let log_d = 0.25 * d * (1.0 - 4.0 * a).ln();
    let f = |v: &[f64]| log_d + a * dot(omega, omega) + b * dot(omega, v) - 0.5 * dot(v, v);
    (f(x) + f(y)).exp()
}

/// `log E[Z²]` for dense-exponential parameters, written out from the
/// variance theorem with explicit inverses.
pub fn de_log_second_moment(p: &DEParams, x: &[f64], y: &[f64]) -> f64 {
    let d = p.dim();
    let inv8 = Matrix::from_diagonal(&Vector::from_iterator(d, p.a_diag.iter().map(|a| 1.0 / (1.0 - 8.0 * a))));
    let xv = Vector::from_row_slice(x);
    let yv = Vector::from_row_slice(y);
    let g1 = &p.c1 + p.b1.transpose() * &inv8 * &p.b1;
    let g2 = &p.c2 + p.b2.transpose() * &inv8 * &p.b2;
    let h = p.b1.transpose() * &inv8 * &p.b2;
    let logdet8: f64 = p.a_diag.iter().map(|a| (1.0 - 8.0 * a).ln()).sum();
    4.0 * p.log_det_d - 0.5 * logdet8
        + 2.0 * xv.dot(&(g1 * &xv))
        + 2.0 * yv.dot(&(g2 * &yv))
        + 4.0 * xv.dot(&(h * &yv))
}

/// Mean over all pairs of [`de_log_second_moment`].
pub fn pairwise_objective(p: &DEParams, xs: &Matrix, ys: &Matrix) -> f64 {
    let mut total = 0.0;
    for i in 0..xs.nrows() {
        let x: Vec<f64> = xs.row(i).iter().copied().collect();
        for j in 0..ys.nrows() {
            let y: Vec<f64> = ys.row(j).iter().copied().collect();
            total += de_log_second_moment(p, &x, &y);
        }
    }
    total / (xs.nrows() * ys.nrows()) as f64
}

/// Largest violation of the dense-exponential validity block:
/// `8A ≺ I`, `B¹ᵀ(I-4A)⁻¹B² = I`, `Cᵏ = -½Bᵏᵀ(I-4A)⁻¹Bᵏ`, `D = det(I-4A)^{1/4}`.
pub fn de_constraint_violation(p: &DEParams) -> f64 {
    let d = p.dim();
    if p.a_diag.iter().any(|a| a.is_nan() || 8.0 * a >= 1.0) {
        return f64::INFINITY;
    }
    let inv4 = Matrix::from_diagonal(&Vector::from_iterator(d, p.a_diag.iter().map(|a| 1.0 / (1.0 - 4.0 * a))));
    let cross = (p.b1.transpose() * &inv4 * &p.b2 - Matrix::identity(d, d)).amax();
    let c1 = (&p.c1 + p.b1.transpose() * &inv4 * &p.b1 * 0.5).amax();
    let c2 = (&p.c2 + p.b2.transpose() * &inv4 * &p.b2 * 0.5).amax();
    let det: f64 = p.a_diag.iter().map(|a| 1.0 - 4.0 * a).product();
    let dd = (p.log_det_d.exp() - det.powf(0.25)).abs();
    cross.max(c1).max(c2).max(dd)
}

/// Gauss–Hermite nodes and weights for `∫ e^{-t²} g(t) dt`, by Newton
/// iteration on the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `E g(ω)` for `ω ~ N(0, I₂)` by tensor Gauss–Hermite quadrature.
pub fn gh_expect_2d(n: usize, g: impl Fn(&[f64]) -> f64) -> f64 {
    let (t, w) = gauss_hermite(n);
    let s = std::f64::consts::SQRT_2;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += w[i] * w[j] * g(&[s * t[i], s * t[j]]);
        }
    }
    total / std::f64::consts::PI
}

/// Mean and standard error of the mean.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
